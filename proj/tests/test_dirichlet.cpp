#include <doctest.h>

#include <cmath>
#include <random>

#include "markovdetect/dirichlet.hpp"
#include "markovdetect/errors.hpp"
#include "markovdetect/synthetic.hpp"

using namespace markovdetect;

namespace {

TransitionCounts single_row(std::size_t c, std::size_t row, const std::vector<std::uint64_t>& counts) {
  std::vector<std::uint64_t> z(c * c, 0);
  std::uint64_t total = 0;
  for (std::size_t k = 0; k < c; ++k) {
    z[row * c + k] = counts[k];
    total += counts[k];
  }
  return TransitionCounts(c, std::move(z), total + 1);
}

}  // namespace

TEST_CASE("unvisited rows are uniform") {
  const auto p = posterior_mean(TransitionCounts(8), 0.1);
  for (std::size_t j = 0; j < 8; ++j) {
    for (std::size_t k = 0; k < 8; ++k) CHECK(p(j, k) == doctest::Approx(0.125).epsilon(1e-15));
  }
}

TEST_CASE("posterior mean of [9,1,0...] row") {
  const auto z = single_row(8, 2, {9, 1, 0, 0, 0, 0, 0, 0});
  const auto p = posterior_mean(z, 0.1);
  // (Z + nu) / (n + c nu) = x / 10.8
  CHECK(p(2, 0) == doctest::Approx(9.1 / 10.8).epsilon(1e-14));
  CHECK(p(2, 1) == doctest::Approx(1.1 / 10.8).epsilon(1e-14));
  CHECK(p(2, 0) == doctest::Approx(0.84259).epsilon(1e-5));
  CHECK(p(2, 1) == doctest::Approx(0.10185).epsilon(1e-4));
  for (std::size_t k = 2; k < 8; ++k) CHECK(p(2, k) == doctest::Approx(0.0092593).epsilon(1e-4));

  // Monte Carlo mean within 3 standard errors.
  DirichletDrawConfig cfg{100000, 99};
  const auto draws = sample_posterior(z, 0.1, cfg);
  for (std::size_t k = 0; k < 8; ++k) {
    double sum = 0.0, sq = 0.0;
    for (const auto& d : draws) {
      sum += d(2, k);
      sq += d(2, k) * d(2, k);
    }
    const double n = static_cast<double>(draws.size());
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(mean - p(2, k)) < 3 * se);
  }
}

TEST_CASE("large nu drives entries to 1/c") {
  const auto z = single_row(4, 0, {100, 0, 0, 0});
  const auto p = posterior_mean(z, 1e9);
  for (std::size_t k = 0; k < 4; ++k) CHECK(p(0, k) == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("rows are stochastic and strictly interior") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t c = 2 + rng() % 12;
    std::vector<std::uint64_t> z(c * c);
    std::uint64_t total = 0;
    for (auto& v : z) total += (v = rng() % 3 == 0 ? 0 : rng() % 1000);
    const TransitionCounts counts(c, z, total + 1);
    const auto p = posterior_mean(counts, 0.1);
    const auto draws = sample_posterior(counts, 0.1, {50, rng()});
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (double v : p.row(j)) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
      for (const auto& d : draws) {
        double ds = 0.0;
        for (double v : d.row(j)) ds += v;
        CHECK(std::abs(ds - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("draws are deterministic in the seed") {
  const auto z = single_row(8, 1, {5, 0, 2, 0, 0, 7, 0, 1});
  const auto a = sample_posterior(z, 0.1, {2, 42});
  const auto b = sample_posterior(z, 0.1, {2, 42});
  const auto c = sample_posterior(z, 0.1, {2, 43});
  REQUIRE(a.size() == 2);
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(std::equal(a[r].data().begin(), a[r].data().end(), b[r].data().begin()));
  }
  CHECK_FALSE(std::equal(a[0].data().begin(), a[0].data().end(), c[0].data().begin()));
}

TEST_CASE("row gammas regenerate a draw row") {
  const auto z = single_row(6, 3, {4, 1, 0, 9, 2, 0});
  const auto draws = sample_posterior(z, 0.1, {3, 11});
  std::vector<double> g(6);
  draw_row_gammas(z, 3, 0.1, 11, 2, g);
  double s = 0.0;
  for (double v : g) s += v;
  for (std::size_t k = 0; k < 6; ++k) CHECK(g[k] / s == doctest::Approx(draws[2](3, k)).epsilon(1e-14));
}

TEST_CASE("invalid parameters") {
  CHECK_THROWS_AS(posterior_mean(TransitionCounts(4), 0.0), InvalidParameter);
  CHECK_THROWS_AS(posterior_mean(TransitionCounts(4), -1.0), InvalidParameter);
  CHECK_THROWS_AS(sample_posterior(TransitionCounts(4), 0.1, {0, 1}), InvalidParameter);
}

TEST_CASE("estimates concentrate on the true matrix as m grows") {
  const auto truth = default_template(8, false);
  double err_prev = 1e9;
  for (std::size_t m : {1000u, 10000u, 100000u}) {
    double err = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto seq = simulate_chain(truth, 8, m, seed);
      const auto p = posterior_mean(count_transitions(seq, 8), 0.1);
      for (std::size_t i = 0; i < 64; ++i) err += std::abs(p.data()[i] - truth[i]);
    }
    CHECK(err < err_prev);
    err_prev = err;
  }
}
