#include <doctest.h>

#include <cmath>
#include <random>

#include "markovdetect/elastic_net.hpp"
#include "markovdetect/errors.hpp"
#include "support/oracles.hpp"

using namespace markovdetect;

namespace {

Matrix to_matrix(const oracle::Problem& pr) {
  Matrix x(pr.n, pr.p);
  for (std::size_t i = 0; i < pr.n; ++i) {
    for (std::size_t j = 0; j < pr.p; ++j) x(i, j) = pr.x[i * pr.p + j];
  }
  return x;
}

PenaltyConfig single(double lambda, double rho, std::vector<double> weights = {}) {
  PenaltyConfig cfg;
  cfg.rho = rho;
  cfg.lambda_grid = {lambda};
  cfg.penalty_weights = std::move(weights);
  cfg.early_stop = false;
  return cfg;
}

}  // namespace

TEST_CASE("null model at lambda_max") {
  const auto pr = oracle::random_problem(1, 60, 6);
  const auto x = to_matrix(pr);
  for (double rho : {0.0, 0.5, 0.9}) {
    const double lmax = lambda_max(x, pr.y, rho);
    const auto fit = fit_path(x, pr.y, single(lmax, rho));
    REQUIRE(fit.path.size() == 1);
    CHECK(fit.path[0].active() == 0);
    double ybar = 0.0;
    for (int v : pr.y) ybar += v;
    ybar /= static_cast<double>(pr.y.size());
    CHECK(fit.path[0].intercept == doctest::Approx(std::log(ybar / (1 - ybar))).epsilon(1e-12));
    // Just below lambda_max something enters.
    const auto below = fit_path(x, pr.y, single(lmax * 0.9, rho));
    CHECK(below.path[0].active() > 0);
  }
}

TEST_CASE("matches the proximal-gradient oracle") {
  std::mt19937_64 rng(2024);
  for (int inst = 0; inst < 8; ++inst) {
    const std::size_t p = 2 + rng() % 7;
    auto pr = oracle::random_problem(rng(), 50, p);
    const bool weighted = inst % 2 == 1;
    if (weighted) {
      for (auto& w : pr.w) w = 0.5 + static_cast<double>(rng() % 100) / 50.0;
    }
    const auto x = to_matrix(pr);
    for (double rho : {0.0, 0.5, 1.0}) {
      const double lmax = lambda_max(x, pr.y, rho, weighted ? pr.w : std::vector<double>{});
      for (double frac : {0.3, 0.05, 0.005}) {
        const double lambda = lmax * frac;
        const auto fit = fit_path(x, pr.y, single(lambda, rho, weighted ? pr.w : std::vector<double>{}));
        const auto ref = oracle::fista(pr, lambda, rho);
        const auto& pt = fit.path.back();
        const auto beta = pt.coefficients.dense();
        CHECK(pt.converged);
        CHECK(std::abs(pt.objective - ref.objective) < 1e-6);
        CHECK(std::abs(oracle::objective(pr, pt.intercept, beta, lambda, rho) - ref.objective) < 1e-6);
        CHECK(std::abs(pt.intercept - ref.intercept) < 1e-4);
        for (std::size_t j = 0; j < p; ++j) CHECK(std::abs(beta[j] - ref.beta[j]) < 1e-4);
      }
    }
  }
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 25; ++rep) {
    auto pr = oracle::random_problem(rng(), 30, 5);
    for (auto& w : pr.w) w = 0.5 + std::abs(normal(rng));
    const auto x = to_matrix(pr);
    const double lambda = std::abs(normal(rng)) * 3, rho = 0.3;
    double b0 = normal(rng);
    std::vector<double> b(5);
    for (auto& v : b) v = normal(rng);
    const auto g = smooth_gradient(x, pr.y, b0, b, lambda, rho, pr.w);
    const double h = 1e-5;
    auto f = [&](double c0, const std::vector<double>& c) {
      return smooth_objective(x, pr.y, c0, c, lambda, rho, pr.w);
    };
    double num = 0.0, den = 0.0;
    const double fd0 = (f(b0 + h, b) - f(b0 - h, b)) / (2 * h);
    num += (fd0 - g.intercept) * (fd0 - g.intercept);
    den += g.intercept * g.intercept;
    for (std::size_t j = 0; j < 5; ++j) {
      auto up = b, dn = b;
      up[j] += h;
      dn[j] -= h;
      const double fd = (f(b0, up) - f(b0, dn)) / (2 * h);
      num += (fd - g.beta[j]) * (fd - g.beta[j]);
      den += g.beta[j] * g.beta[j];
    }
    CHECK(std::sqrt(num / den) < 1e-6);
  }
}

TEST_CASE("path points satisfy KKT and have monotone objective traces") {
  const auto pr = oracle::random_problem(5, 120, 15);
  const auto x = to_matrix(pr);
  PenaltyConfig cfg;
  cfg.rho = 0.5;
  cfg.n_lambda = 40;
  const auto fit = fit_path(x, pr.y, cfg);
  CHECK(fit.all_converged());
  CHECK(fit.path.size() >= 5);
  for (const auto& pt : fit.path) {
    CHECK(pt.kkt_violation <= 1e-7);
    const auto beta = pt.coefficients.dense();
    CHECK(kkt_violation(x, pr.y, pt.intercept, beta, pt.lambda, 0.5) <= 1e-7);
    for (std::size_t t = 1; t < pt.objective_trace.size(); ++t) {
      CHECK(pt.objective_trace[t] <= pt.objective_trace[t - 1]);
    }
  }
}

TEST_CASE("ridge path deviance decreases") {
  const auto pr = oracle::random_problem(8, 80, 6);
  const auto x = to_matrix(pr);
  PenaltyConfig cfg;
  cfg.rho = 1.0;
  cfg.n_lambda = 30;
  cfg.early_stop = false;
  const auto fit = fit_path(x, pr.y, cfg);
  REQUIRE(fit.path.size() == 30);
  for (std::size_t k = 1; k < fit.path.size(); ++k) {
    CHECK(fit.path[k].deviance <= fit.path[k - 1].deviance + 1e-9);
  }
}

TEST_CASE("label validation and degenerate labels") {
  Matrix x(4, 2, 1.0);
  const std::vector<int> bad{0, 1, 2, 0};
  CHECK_THROWS_AS(fit_path(x, bad, PenaltyConfig{}), InvalidInput);
  const std::vector<int> ones{1, 1, 1, 1};
  const auto fit = fit_path(x, ones, PenaltyConfig{});
  CHECK(fit.degenerate_labels);
  CHECK(fit.stop == PathStop::DegenerateLabels);
  REQUIRE(fit.path.size() == 1);
  CHECK(fit.path[0].active() == 0);
  CHECK(fit.path[0].intercept > 5);
  CHECK_THROWS_AS(fit_path(x, std::vector<int>{0, 1}, PenaltyConfig{}), InvalidInput);
}

TEST_CASE("active-set cap stops the path") {
  const auto pr = oracle::random_problem(11, 100, 30);
  const auto x = to_matrix(pr);
  PenaltyConfig cfg;
  cfg.max_active = 4;
  cfg.early_stop = false;
  const auto fit = fit_path(x, pr.y, cfg);
  CHECK(fit.stop == PathStop::MaxActive);
  for (const auto& pt : fit.path) CHECK(pt.active() <= 4);
}

TEST_CASE("parameter validation") {
  const auto pr = oracle::random_problem(1, 20, 3);
  const auto x = to_matrix(pr);
  PenaltyConfig cfg;
  cfg.rho = 1.5;
  CHECK_THROWS_AS(fit_path(x, pr.y, cfg), InvalidParameter);
  cfg = PenaltyConfig{};
  cfg.lambda_grid = {0.1, 0.2};
  CHECK_THROWS_AS(fit_path(x, pr.y, cfg), InvalidParameter);
  cfg = PenaltyConfig{};
  cfg.penalty_weights = {1.0, 0.0, 1.0};
  CHECK_THROWS_AS(fit_path(x, pr.y, cfg), InvalidParameter);
}

TEST_CASE("prediction") {
  SparseCoefficients zero;
  zero.dimension = 3;
  const std::vector<double> row{1.0, -2.0, 3.0};
  CHECK(predict_prob(0.0, zero, row) == 0.5);
  CHECK(predict_prob(-7.4231, zero, row) == doctest::Approx(5.95e-4).epsilon(2e-3));
  const auto beta = SparseCoefficients::from_dense(std::vector<double>{0.0, 0.7, 0.0});
  CHECK(predict_linear(0.25, beta, row) == doctest::Approx(0.25 - 1.4));
  double last = 0.0;
  for (double v = -3.0; v <= 3.0; v += 0.5) {
    const std::vector<double> r{0.0, v, 0.0};
    const double p = predict_prob(0.0, beta, r);
    CHECK(p >= last);
    last = p;
  }
  CHECK_THROWS_AS(predict_linear(0.0, beta, std::vector<double>{1.0}), InvalidInput);
}

TEST_CASE("lambda grid") {
  const auto g = lambda_grid(2.0, 100, 1e-4);
  CHECK(g.size() == 100);
  CHECK(g.front() == 2.0);
  CHECK(g.back() == doctest::Approx(2e-4).epsilon(1e-12));
  for (std::size_t k = 1; k < g.size(); ++k) CHECK(g[k] < g[k - 1]);
}
