#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "markovdetect/trace.hpp"

namespace markovdetect {

inline constexpr double kDefaultNu = 0.1;
inline constexpr std::size_t kDefaultDraws = 1000;

/// Row-stochastic c x c estimate of the transition matrix (row-major).
class TransitionEstimate {
 public:
  TransitionEstimate(std::size_t c, double nu, std::vector<double> probabilities);

  std::size_t num_categories() const noexcept { return c_; }
  double nu() const noexcept { return nu_; }
  double operator()(std::size_t j, std::size_t k) const { return p_[j * c_ + k]; }
  std::span<const double> row(std::size_t j) const { return {p_.data() + j * c_, c_}; }
  std::span<const double> data() const noexcept { return p_; }

 private:
  std::size_t c_;
  double nu_;
  std::vector<double> p_;
};

struct DirichletDrawConfig {
  std::size_t draws = kDefaultDraws;
  std::uint64_t seed = 0;
};

/// E[P | Z] under independent symmetric Dirichlet(nu) rows:
/// (Z_jk + nu) / (n_j + c nu). Unvisited rows come out uniform.
TransitionEstimate posterior_mean(const TransitionCounts& counts, double nu);

/// R independent posterior draws of P. Row j of draw r is built from its own
/// RNG substream keyed on (seed, r, j), so any subset of rows of any draw can
/// be regenerated on its own.
std::vector<TransitionEstimate> sample_posterior(const TransitionCounts& counts, double nu,
                                                 const DirichletDrawConfig& cfg);

/// Unnormalized Gamma(Z_jk + nu, 1) variates for row `row` of draw `draw`.
/// Normalizing them yields that row of the corresponding sample_posterior
/// draw. Variates are floored at the smallest normal double so logs stay
/// finite.
void draw_row_gammas(const TransitionCounts& counts, std::size_t row, double nu,
                     std::uint64_t seed, std::uint64_t draw, std::span<double> out);

}  // namespace markovdetect
