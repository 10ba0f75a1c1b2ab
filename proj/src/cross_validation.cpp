#include "markovdetect/cross_validation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <random>

#include "markovdetect/errors.hpp"
#include "markovdetect/evaluation.hpp"
#include "markovdetect/rng.hpp"

namespace markovdetect {

namespace {

constexpr double kProbClip = 1e-5;

struct FoldJob {
  std::size_t rho_index;
  std::size_t fold;
};

// Out-of-fold linear predictors for one (rho, fold) job: one vector per
// lambda index, or a single constant entry when the fold was degenerate.
struct FoldPrediction {
  std::vector<std::vector<double>> eta;
  bool constant = false;
};

double criterion_value(CvCriterion criterion, std::span<const double> eta,
                       std::span<const int> y, double fdr) {
  switch (criterion) {
    case CvCriterion::Deviance: {
      double dev = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double p = std::clamp(inv_logit(eta[i]), kProbClip, 1.0 - kProbClip);
        dev -= y[i] ? std::log(p) : std::log1p(-p);
      }
      return 2.0 * dev / static_cast<double>(y.size());
    }
    case CvCriterion::Misclassification: {
      std::size_t wrong = 0;
      for (std::size_t i = 0; i < y.size(); ++i) wrong += (eta[i] > 0.0) != (y[i] == 1);
      return static_cast<double>(wrong) / static_cast<double>(y.size());
    }
    case CvCriterion::DetectionAtFdr:
      return -accuracy_at_fdr(eta, y, fdr);
  }
  return 0.0;
}

}  // namespace

std::vector<std::size_t> stratified_fold_ids(std::span<const int> y, std::size_t k,
                                             std::uint64_t seed) {
  if (k < 2) throw InvalidParameter("cross-validation needs at least 2 folds");
  if (y.size() < k) throw InvalidInput("fewer observations than folds");
  std::vector<std::size_t> ids(y.size());
  std::size_t next = 0;
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == cls) members.push_back(i);
    }
    SplitMix64 engine(substream_seed(seed, 0x5f01d, static_cast<std::uint64_t>(cls)));
    std::shuffle(members.begin(), members.end(), engine);
    for (std::size_t i : members) ids[i] = next++ % k;
  }
  return ids;
}

CvResult cv_tune(const Matrix& x, std::span<const int> y, const PenaltyConfig& base,
                 const CvConfig& cv) {
  validate_labels(y);
  if (y.size() != x.rows()) throw InvalidInput("label count does not match design rows");
  if (cv.criterion == CvCriterion::DetectionAtFdr &&
      !(cv.fdr_level > 0.0 && cv.fdr_level < 1.0)) {
    throw InvalidParameter("fdr level must lie in (0, 1)");
  }
  const auto fold_of = stratified_fold_ids(y, cv.folds, cv.seed);
  const std::vector<double> rhos = cv.rho_grid.empty() ? std::vector<double>{base.rho} : cv.rho_grid;

  std::vector<std::vector<double>> grids(rhos.size());
  for (std::size_t r = 0; r < rhos.size(); ++r) {
    if (!base.lambda_grid.empty()) {
      grids[r] = base.lambda_grid;
    } else {
      grids[r] = lambda_grid(lambda_max(x, y, rhos[r], base.penalty_weights), base.n_lambda,
                             base.lambda_min_ratio);
    }
  }

  std::vector<std::vector<std::size_t>> train_rows(cv.folds), test_rows(cv.folds);
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t f = 0; f < cv.folds; ++f) {
      (fold_of[i] == f ? test_rows[f] : train_rows[f]).push_back(i);
    }
  }

  std::vector<FoldJob> jobs;
  for (std::size_t r = 0; r < rhos.size(); ++r) {
    for (std::size_t f = 0; f < cv.folds; ++f) jobs.push_back({r, f});
  }
  std::vector<FoldPrediction> slots(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());

  auto run_job = [&](std::size_t j) {
    try {
      const auto [r, f] = jobs[j];
      const Matrix x_train = select_rows(x, train_rows[f]);
      const Matrix x_test = select_rows(x, test_rows[f]);
      std::vector<int> y_train(train_rows[f].size());
      for (std::size_t i = 0; i < y_train.size(); ++i) y_train[i] = y[train_rows[f][i]];
      PenaltyConfig cfg = base;
      cfg.rho = rhos[r];
      cfg.lambda_grid = grids[r];
      const FitResult fit = fit_path(x_train, y_train, cfg);
      FoldPrediction& out = slots[j];
      out.constant = fit.degenerate_labels;
      for (const auto& pt : fit.path) {
        out.eta.push_back(linear_predictors(x_test, pt.intercept, pt.coefficients));
      }
    } catch (...) {
      errors[j] = std::current_exception();
    }
  };

  const auto njobs = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic) if (cv.parallel)
  for (std::ptrdiff_t j = 0; j < njobs; ++j) run_job(static_cast<std::size_t>(j));
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  CvResult result;
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  std::vector<double> pooled(y.size());
  auto pool = [&](std::size_t r, std::size_t k) {
    for (std::size_t f = 0; f < cv.folds; ++f) {
      const auto& slot = slots[r * cv.folds + f];
      const auto& eta = slot.constant ? slot.eta.front() : slot.eta[k];
      for (std::size_t i = 0; i < test_rows[f].size(); ++i) pooled[test_rows[f][i]] = eta[i];
    }
  };
  for (std::size_t r = 0; r < rhos.size(); ++r) {
    std::size_t length = grids[r].size();
    for (std::size_t f = 0; f < cv.folds; ++f) {
      const auto& slot = slots[r * cv.folds + f];
      if (slot.constant) {
        result.single_class_fold = true;
      } else {
        length = std::min(length, slot.eta.size());
      }
    }
    CvCurve curve;
    curve.rho = rhos[r];
    curve.lambdas.assign(grids[r].begin(), grids[r].begin() + static_cast<std::ptrdiff_t>(length));
    curve.score.resize(length);
    for (std::size_t k = 0; k < length; ++k) {
      pool(r, k);
      curve.score[k] = criterion_value(cv.criterion, pooled, y, cv.fdr_level);
      if (curve.score[k] < best) {
        best = curve.score[k];
        result.rho = rhos[r];
        result.rho_index = r;
        result.lambda = curve.lambdas[k];
        result.lambda_index = k;
        found = true;
      }
    }
    result.curves.push_back(std::move(curve));
  }
  if (!found) throw TrainingError("cross-validation produced no usable path point");
  pool(result.rho_index, result.lambda_index);
  result.out_of_fold = std::move(pooled);
  return result;
}

FitResult fit_to_lambda(const Matrix& x, std::span<const int> y, const PenaltyConfig& cfg,
                        double lambda) {
  if (!(lambda > 0.0)) throw InvalidParameter("lambda must be > 0");
  PenaltyConfig path_cfg = cfg;
  path_cfg.early_stop = false;
  std::vector<double> full = cfg.lambda_grid;
  if (full.empty()) {
    full = lambda_grid(lambda_max(x, y, cfg.rho, cfg.penalty_weights), cfg.n_lambda,
                       cfg.lambda_min_ratio);
  }
  path_cfg.lambda_grid.clear();
  for (double l : full) {
    if (l > lambda) path_cfg.lambda_grid.push_back(l);
  }
  path_cfg.lambda_grid.push_back(lambda);
  return fit_path(x, y, path_cfg);
}

}  // namespace markovdetect
