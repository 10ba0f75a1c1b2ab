#include "markovdetect/dirichlet.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "markovdetect/errors.hpp"
#include "markovdetect/rng.hpp"

namespace markovdetect {

namespace {

void check_nu(double nu) {
  if (!(nu > 0.0) || !std::isfinite(nu)) {
    throw InvalidParameter("Dirichlet concentration nu must be a positive finite number");
  }
}

}  // namespace

TransitionEstimate::TransitionEstimate(std::size_t c, double nu, std::vector<double> p)
    : c_(c), nu_(nu), p_(std::move(p)) {
  if (p_.size() != c_ * c_) throw InvalidInput("transition estimate must be c x c");
}

TransitionEstimate posterior_mean(const TransitionCounts& counts, double nu) {
  check_nu(nu);
  const std::size_t c = counts.num_categories();
  std::vector<double> p(c * c);
  for (std::size_t j = 0; j < c; ++j) {
    const double denom = static_cast<double>(counts.row_total(j)) + static_cast<double>(c) * nu;
    for (std::size_t k = 0; k < c; ++k) {
      p[j * c + k] = (static_cast<double>(counts(j, k)) + nu) / denom;
    }
  }
  return TransitionEstimate(c, nu, std::move(p));
}

void draw_row_gammas(const TransitionCounts& counts, std::size_t row, double nu,
                     std::uint64_t seed, std::uint64_t draw, std::span<double> out) {
  const std::size_t c = counts.num_categories();
  if (out.size() != c) throw InvalidInput("gamma output buffer must have c entries");
  SplitMix64 engine(substream_seed(seed, draw, row));
  constexpr double floor = std::numeric_limits<double>::min();
  for (std::size_t k = 0; k < c; ++k) {
    std::gamma_distribution<double> gamma(static_cast<double>(counts(row, k)) + nu, 1.0);
    out[k] = std::max(gamma(engine), floor);
  }
}

std::vector<TransitionEstimate> sample_posterior(const TransitionCounts& counts, double nu,
                                                 const DirichletDrawConfig& cfg) {
  check_nu(nu);
  if (cfg.draws == 0) throw InvalidParameter("number of posterior draws must be >= 1");
  const std::size_t c = counts.num_categories();
  std::vector<TransitionEstimate> draws;
  draws.reserve(cfg.draws);
  std::vector<double> g(c);
  for (std::size_t r = 0; r < cfg.draws; ++r) {
    std::vector<double> p(c * c);
    for (std::size_t j = 0; j < c; ++j) {
      draw_row_gammas(counts, j, nu, cfg.seed, r, g);
      double sum = 0.0;
      for (double v : g) sum += v;
      for (std::size_t k = 0; k < c; ++k) p[j * c + k] = g[k] / sum;
    }
    draws.emplace_back(c, nu, std::move(p));
  }
  return draws;
}

}  // namespace markovdetect
