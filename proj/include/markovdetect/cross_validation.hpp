#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "markovdetect/elastic_net.hpp"

namespace markovdetect {

enum class CvCriterion { Deviance, Misclassification, DetectionAtFdr };

struct CvConfig {
  std::size_t folds = 10;
  std::uint64_t seed = 0;
  CvCriterion criterion = CvCriterion::Deviance;
  /// Used by DetectionAtFdr only.
  double fdr_level = 0.001;
  /// Empty means the single rho of the penalty config.
  std::vector<double> rho_grid;
  bool parallel = true;
};

/// Pooled out-of-fold criterion along one rho's lambda grid. Lower is better
/// for every criterion (detection rates are negated).
struct CvCurve {
  double rho = 0.0;
  std::vector<double> lambdas;
  std::vector<double> score;
};

struct CvResult {
  double lambda = 0.0;
  double rho = 0.0;
  std::size_t rho_index = 0;
  std::size_t lambda_index = 0;
  std::vector<CvCurve> curves;
  /// Some training fold held a single class and predicted a constant.
  bool single_class_fold = false;
  /// Pooled out-of-fold linear predictors at the selected (rho, lambda).
  std::vector<double> out_of_fold;
};

/// Fold id in [0, k) per observation. Each class is shuffled with its own
/// seeded permutation and dealt round-robin, so class proportions per fold
/// differ by at most one observation.
std::vector<std::size_t> stratified_fold_ids(std::span<const int> y, std::size_t k,
                                             std::uint64_t seed);

/// Grid search over (rho, lambda). Each rho gets the automatic lambda grid
/// of the full data (or `base.lambda_grid` when given); every fold fits that
/// grid, paths are truncated to the shortest fold, and out-of-fold
/// predictions are pooled before scoring. Ties resolve to the earlier rho,
/// then the larger lambda.
CvResult cv_tune(const Matrix& x, std::span<const int> y, const PenaltyConfig& base,
                 const CvConfig& cv);

/// Warm-started path on the full data ending exactly at `lambda`. The path
/// runs through the automatic grid values above `lambda`, so the returned
/// last point is the same fit a full-grid path would give there.
FitResult fit_to_lambda(const Matrix& x, std::span<const int> y, const PenaltyConfig& cfg,
                        double lambda);

}  // namespace markovdetect
