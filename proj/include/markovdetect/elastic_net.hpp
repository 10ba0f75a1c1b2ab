#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "markovdetect/matrix.hpp"

namespace markovdetect {

inline constexpr std::size_t kDefaultMaxActive = 20000;

/// Penalty and path settings for elastic-net logistic regression.
///
/// The minimized objective is
///
///     -loglik(b0, beta) + lambda * sum_j [ rho (w_j beta_j)^2 + (1 - rho) w_j |beta_j| ]
///
/// with the log-likelihood summed (not averaged) over observations and the
/// intercept b0 never penalized. With all w_j = 1 this is the plain elastic
/// net; w_j = 1 / |beta~_j| gives the adaptive form, where the weight enters
/// both parts through beta_j / beta~_j.
struct PenaltyConfig {
  double rho = 0.5;
  /// Strictly descending; empty means an automatic grid of `n_lambda`
  /// log-spaced values from lambda_max down to lambda_min_ratio * lambda_max.
  std::vector<double> lambda_grid;
  std::size_t n_lambda = 100;
  double lambda_min_ratio = 1e-4;
  /// Per-column weights, all finite and > 0. Empty means all ones.
  std::vector<double> penalty_weights;
  std::size_t max_active = kDefaultMaxActive;
  /// Max absolute coefficient change per sweep at convergence; also the KKT
  /// target on the per-observation gradient scale.
  double tolerance = 1e-7;
  std::size_t max_sweeps = 100000;
  /// Stop the path once the fit saturates (deviance ratio > 0.999 or its
  /// relative gain between consecutive lambdas < 1e-5).
  bool early_stop = true;
};

struct SparseCoefficients {
  std::size_t dimension = 0;
  std::vector<std::size_t> index;
  std::vector<double> value;

  std::size_t nonzeros() const noexcept { return index.size(); }
  std::vector<double> dense() const;
  static SparseCoefficients from_dense(std::span<const double> beta);
};

struct PathPoint {
  double lambda = 0.0;
  double intercept = 0.0;
  SparseCoefficients coefficients;
  double objective = 0.0;
  double deviance = 0.0;
  std::size_t sweeps = 0;
  bool converged = false;
  /// Largest coordinate-wise KKT residual divided by n.
  double kkt_violation = 0.0;
  /// Penalized objective after each IRLS iteration; nonincreasing.
  std::vector<double> objective_trace;

  std::size_t active() const noexcept { return coefficients.nonzeros(); }
};

enum class PathStop { Completed, MaxActive, Saturated, DegenerateLabels };

struct FitResult {
  std::vector<PathPoint> path;
  PathStop stop = PathStop::Completed;
  double null_deviance = 0.0;
  /// Labels were all 0 or all 1: the path holds a single intercept-only fit.
  bool degenerate_labels = false;

  bool all_converged() const;
};

/// Labels must be 0/1 (InvalidInput otherwise). Warm-started coordinate
/// descent on an IRLS quadratic approximation, with a backtracking line
/// search on the true objective after each IRLS step and sequential strong
/// rules for screening.
FitResult fit_path(const Matrix& x, std::span<const int> y, const PenaltyConfig& cfg);

/// Smallest lambda at which beta = 0 is optimal. For rho near 1 the L1 share
/// is floored at 1e-3 so the value stays finite.
double lambda_max(const Matrix& x, std::span<const int> y, double rho,
                  std::span<const double> weights = {});
std::vector<double> lambda_grid(double lambda_max, std::size_t count, double min_ratio);

/// Objective pieces, exposed for gradient checks and oracle comparisons.
double negative_log_likelihood(const Matrix& x, std::span<const int> y, double intercept,
                               std::span<const double> beta);
double penalty(std::span<const double> beta, double lambda, double rho,
               std::span<const double> weights = {});
double penalized_objective(const Matrix& x, std::span<const int> y, double intercept,
                           std::span<const double> beta, double lambda, double rho,
                           std::span<const double> weights = {});
/// Negative log-likelihood plus the quadratic part of the penalty.
double smooth_objective(const Matrix& x, std::span<const int> y, double intercept,
                        std::span<const double> beta, double lambda, double rho,
                        std::span<const double> weights = {});

struct Gradient {
  double intercept = 0.0;
  std::vector<double> beta;
};
Gradient smooth_gradient(const Matrix& x, std::span<const int> y, double intercept,
                         std::span<const double> beta, double lambda, double rho,
                         std::span<const double> weights = {});
double kkt_violation(const Matrix& x, std::span<const int> y, double intercept,
                     std::span<const double> beta, double lambda, double rho,
                     std::span<const double> weights = {});

double predict_linear(double intercept, const SparseCoefficients& beta,
                      std::span<const double> row);
double predict_prob(double intercept, const SparseCoefficients& beta,
                    std::span<const double> row);
std::vector<double> linear_predictors(const Matrix& x, double intercept,
                                      const SparseCoefficients& beta);

void validate_labels(std::span<const int> y);

}  // namespace markovdetect
