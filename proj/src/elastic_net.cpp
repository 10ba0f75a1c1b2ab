#include "markovdetect/elastic_net.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "markovdetect/errors.hpp"

namespace markovdetect {

namespace {

constexpr double kMinWeight = 1e-5;       // IRLS curvature floor
constexpr double kMinL1Share = 1e-3;      // lambda_max floor for rho -> 1
constexpr double kLabelClip = 1e-5;
constexpr std::size_t kMinPathLength = 5;  // before saturation checks apply
constexpr double kSaturatedDevRatio = 0.999;
constexpr double kMinDevRatioGain = 1e-5;

double softplus(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> resolve_weights(std::span<const double> weights, std::size_t p) {
  if (weights.empty()) return std::vector<double>(p, 1.0);
  if (weights.size() != p) {
    throw InvalidInput("penalty weights length " + std::to_string(weights.size()) +
                       " does not match " + std::to_string(p) + " columns");
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw InvalidParameter("penalty weights must be finite and > 0");
    }
  }
  return {weights.begin(), weights.end()};
}

void check_rho(double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidParameter("rho must lie in [0, 1]");
}

double label_mean(std::span<const int> y) {
  double s = 0.0;
  for (int v : y) s += v;
  return s / static_cast<double>(y.size());
}

class PathSolver {
 public:
  PathSolver(const Matrix& x, std::span<const int> y, const PenaltyConfig& cfg,
             std::vector<double> weights)
      : x_(x), y_(y), cfg_(cfg), n_(x.rows()), p_(x.cols()), w_(std::move(weights)),
        beta_(p_, 0.0), eta_(n_), score_(p_), in_set_(p_, 0), prob_(n_), v_(n_), wr_(n_),
        xv_(p_), xv_stamp_(p_, 0) {
    w2_.resize(p_);
    for (std::size_t j = 0; j < p_; ++j) w2_[j] = w_[j] * w_[j];
    const double ybar = label_mean(y_);
    b0_ = std::log(ybar) - std::log1p(-ybar);
    std::fill(eta_.begin(), eta_.end(), b0_);
    refresh_scores();
    const double share = std::max(1.0 - cfg_.rho, kMinL1Share);
    lambda_max_ = 0.0;
    for (std::size_t j = 0; j < p_; ++j) {
      lambda_max_ = std::max(lambda_max_, std::abs(score_[j]) / (share * w_[j]));
    }
    null_exact_ = 1.0 - cfg_.rho >= kMinL1Share;
  }

  double lambda_max() const { return lambda_max_; }

  double deviance() const { return 2.0 * nll(); }

  PathPoint solve(double lambda, double prev_lambda) {
    PathPoint pt;
    pt.lambda = lambda;
    if (null_exact_ && lambda >= lambda_max_ && all_zero()) {
      // The null model is optimal; keep it bit-exact.
      pt.objective = objective(lambda);
      pt.objective_trace.push_back(pt.objective);
      pt.converged = true;
      finish_point(pt, lambda);
      return pt;
    }

    const double l1 = (1.0 - cfg_.rho);
    const double cutoff = 2.0 * lambda - prev_lambda;
    set_.clear();
    std::fill(in_set_.begin(), in_set_.end(), 0);
    for (std::size_t j = 0; j < p_; ++j) {
      if (beta_[j] != 0.0 || std::abs(score_[j]) >= l1 * w_[j] * cutoff) add_to_set(j);
    }

    double tol = cfg_.tolerance;
    std::size_t tightenings = 0;
    bool converged = false;
    for (;;) {
      converged = irls(lambda, tol, pt);
      refresh_scores();
      bool added = false;
      for (std::size_t j = 0; j < p_; ++j) {
        if (!in_set_[j] && std::abs(score_[j]) > lambda * l1 * w_[j]) {
          add_to_set(j);
          added = true;
        }
      }
      if (added && pt.sweeps < cfg_.max_sweeps) continue;
      pt.kkt_violation = current_kkt(lambda);
      if (pt.kkt_violation <= cfg_.tolerance || pt.sweeps >= cfg_.max_sweeps ||
          tightenings >= 5) {
        break;
      }
      tol *= 0.1;
      ++tightenings;
    }
    pt.converged = converged && pt.kkt_violation <= cfg_.tolerance;
    pt.objective = objective(lambda);
    finish_point(pt, lambda);
    return pt;
  }

 private:
  bool all_zero() const {
    return std::all_of(beta_.begin(), beta_.end(), [](double b) { return b == 0.0; });
  }

  void add_to_set(std::size_t j) {
    in_set_[j] = 1;
    set_.push_back(j);
  }

  void finish_point(PathPoint& pt, double lambda) {
    pt.intercept = b0_;
    pt.coefficients = SparseCoefficients::from_dense(beta_);
    pt.deviance = deviance();
    if (pt.kkt_violation == 0.0) pt.kkt_violation = current_kkt(lambda);
  }

  double nll() const {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) s += softplus(eta_[i]) - y_[i] * eta_[i];
    return s;
  }

  double objective(double lambda) const {
    double pen = 0.0;
    for (std::size_t j = 0; j < p_; ++j) {
      const double b = beta_[j];
      if (b != 0.0) pen += cfg_.rho * w2_[j] * b * b + (1.0 - cfg_.rho) * w_[j] * std::abs(b);
    }
    return nll() + lambda * pen;
  }

  void refresh_scores() {
    for (std::size_t i = 0; i < n_; ++i) prob_[i] = sigmoid(eta_[i]);
    for (std::size_t i = 0; i < n_; ++i) wr_[i] = y_[i] - prob_[i];
    for (std::size_t j = 0; j < p_; ++j) score_[j] = dot(x_.col(j), wr_);
  }

  // Requires score_ and prob_ to be current.
  double current_kkt(double lambda) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < n_; ++i) worst += y_[i] - prob_[i];
    worst = std::abs(worst);
    const double l1 = lambda * (1.0 - cfg_.rho);
    const double l2 = 2.0 * lambda * cfg_.rho;
    for (std::size_t j = 0; j < p_; ++j) {
      const double g = -score_[j] + l2 * w2_[j] * beta_[j];
      double viol;
      if (beta_[j] > 0.0) {
        viol = std::abs(g + l1 * w_[j]);
      } else if (beta_[j] < 0.0) {
        viol = std::abs(g - l1 * w_[j]);
      } else {
        viol = std::max(0.0, std::abs(g) - l1 * w_[j]);
      }
      worst = std::max(worst, viol);
    }
    return worst / static_cast<double>(n_);
  }

  // Proximal-Newton iterations restricted to the working set. Returns true
  // when the coefficient change of an IRLS step drops below `tol`.
  bool irls(double lambda, double tol, PathPoint& pt) {
    const double l1 = lambda * (1.0 - cfg_.rho);
    const double l2 = 2.0 * lambda * cfg_.rho;
    double obj = objective(lambda);
    std::vector<double> beta_old(set_.size());
    std::vector<double> eta_old(n_), eta_new(n_);
    std::vector<std::size_t> nonzero;

    while (pt.sweeps < cfg_.max_sweeps) {
      double sum_v = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        const double pr = sigmoid(eta_[i]);
        const double v = std::max(pr * (1.0 - pr), kMinWeight);
        v_[i] = v;
        wr_[i] = y_[i] - pr;
        sum_v += v;
      }
      ++stamp_;
      const double b0_old = b0_;
      for (std::size_t a = 0; a < set_.size(); ++a) beta_old[a] = beta_[set_[a]];
      eta_old = eta_;

      bool full = true;
      while (pt.sweeps < cfg_.max_sweeps) {
        ++pt.sweeps;
        double max_change = 0.0;

        double sum_wr = 0.0;
        for (std::size_t i = 0; i < n_; ++i) sum_wr += wr_[i];
        const double d0 = sum_wr / sum_v;
        if (d0 != 0.0) {
          b0_ += d0;
          for (std::size_t i = 0; i < n_; ++i) {
            wr_[i] -= d0 * v_[i];
            eta_[i] += d0;
          }
          max_change = std::abs(d0);
        }

        const auto& coords = full ? set_ : nonzero;
        for (std::size_t j : coords) {
          auto xj = x_.col(j);
          if (xv_stamp_[j] != stamp_) {
            double s = 0.0;
            for (std::size_t i = 0; i < n_; ++i) s += v_[i] * xj[i] * xj[i];
            xv_[j] = s;
            xv_stamp_[j] = stamp_;
          }
          const double old = beta_[j];
          const double z = dot(xj, wr_) + xv_[j] * old;
          const double denom = xv_[j] + l2 * w2_[j];
          const double updated = denom > 0.0 ? soft_threshold(z, l1 * w_[j]) / denom : 0.0;
          const double d = updated - old;
          if (d != 0.0) {
            beta_[j] = updated;
            for (std::size_t i = 0; i < n_; ++i) {
              wr_[i] -= d * v_[i] * xj[i];
              eta_[i] += d * xj[i];
            }
            max_change = std::max(max_change, std::abs(d));
          }
        }

        if (full) {
          if (max_change < tol) break;
          full = false;
          nonzero.clear();
          for (std::size_t j : set_) {
            if (beta_[j] != 0.0) nonzero.push_back(j);
          }
        } else if (max_change < tol) {
          full = true;
        }
      }

      // Line search on the true objective keeps every IRLS step monotone.
      double new_obj = objective(lambda);
      if (new_obj > obj) {
        eta_new = eta_;
        const double b0_new = b0_;
        std::vector<double> beta_new(set_.size());
        for (std::size_t a = 0; a < set_.size(); ++a) beta_new[a] = beta_[set_[a]];
        double t = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 40; ++halving) {
          t *= 0.5;
          b0_ = b0_old + t * (b0_new - b0_old);
          for (std::size_t a = 0; a < set_.size(); ++a) {
            beta_[set_[a]] = beta_old[a] + t * (beta_new[a] - beta_old[a]);
          }
          for (std::size_t i = 0; i < n_; ++i) eta_[i] = eta_old[i] + t * (eta_new[i] - eta_old[i]);
          new_obj = objective(lambda);
          if (new_obj <= obj) {
            accepted = true;
            break;
          }
        }
        if (!accepted) {
          b0_ = b0_old;
          for (std::size_t a = 0; a < set_.size(); ++a) beta_[set_[a]] = beta_old[a];
          eta_ = eta_old;
          pt.objective_trace.push_back(obj);
          return false;
        }
      }
      pt.objective_trace.push_back(new_obj);

      double change = std::abs(b0_ - b0_old);
      for (std::size_t a = 0; a < set_.size(); ++a) {
        change = std::max(change, std::abs(beta_[set_[a]] - beta_old[a]));
      }
      obj = new_obj;
      if (change < tol) return true;
    }
    return false;
  }

  const Matrix& x_;
  std::span<const int> y_;
  const PenaltyConfig& cfg_;
  std::size_t n_, p_;
  std::vector<double> w_, w2_;
  double b0_ = 0.0;
  std::vector<double> beta_, eta_, score_;
  std::vector<char> in_set_;
  std::vector<std::size_t> set_;
  std::vector<double> prob_, v_, wr_, xv_;
  std::vector<std::size_t> xv_stamp_;
  std::size_t stamp_ = 0;
  double lambda_max_ = 0.0;
  bool null_exact_ = true;
};

}  // namespace

std::vector<double> SparseCoefficients::dense() const {
  std::vector<double> out(dimension, 0.0);
  for (std::size_t k = 0; k < index.size(); ++k) out[index[k]] = value[k];
  return out;
}

SparseCoefficients SparseCoefficients::from_dense(std::span<const double> beta) {
  SparseCoefficients s;
  s.dimension = beta.size();
  for (std::size_t j = 0; j < beta.size(); ++j) {
    if (beta[j] != 0.0) {
      s.index.push_back(j);
      s.value.push_back(beta[j]);
    }
  }
  return s;
}

bool FitResult::all_converged() const {
  return std::all_of(path.begin(), path.end(), [](const PathPoint& p) { return p.converged; });
}

void validate_labels(std::span<const int> y) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) {
      throw InvalidInput("label at index " + std::to_string(i) + " is " + std::to_string(y[i]) +
                         "; labels must be 0 or 1");
    }
  }
}

double lambda_max(const Matrix& x, std::span<const int> y, double rho,
                  std::span<const double> weights) {
  validate_labels(y);
  check_rho(rho);
  if (y.size() != x.rows()) throw InvalidInput("label count does not match design rows");
  const auto w = resolve_weights(weights, x.cols());
  const double ybar = label_mean(y);
  const double share = std::max(1.0 - rho, kMinL1Share);
  std::vector<double> resid(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) resid[i] = y[i] - ybar;
  double out = 0.0;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    out = std::max(out, std::abs(dot(x.col(j), resid)) / (share * w[j]));
  }
  return out;
}

std::vector<double> lambda_grid(double lmax, std::size_t count, double min_ratio) {
  if (count == 0) throw InvalidParameter("lambda grid needs at least one value");
  if (!(min_ratio > 0.0 && min_ratio < 1.0)) {
    throw InvalidParameter("lambda_min_ratio must lie in (0, 1)");
  }
  if (!(lmax > 0.0)) lmax = 1.0;
  std::vector<double> grid(count);
  if (count == 1) {
    grid[0] = lmax;
    return grid;
  }
  const double step = std::log(min_ratio) / static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k) grid[k] = lmax * std::exp(step * static_cast<double>(k));
  grid[0] = lmax;
  return grid;
}

FitResult fit_path(const Matrix& x, std::span<const int> y, const PenaltyConfig& cfg) {
  if (y.size() != x.rows()) throw InvalidInput("label count does not match design rows");
  if (y.empty()) throw InvalidInput("cannot fit an empty data set");
  validate_labels(y);
  check_rho(cfg.rho);
  if (!(cfg.tolerance > 0.0)) throw InvalidParameter("tolerance must be > 0");
  auto weights = resolve_weights(cfg.penalty_weights, x.cols());
  for (std::size_t k = 0; k < cfg.lambda_grid.size(); ++k) {
    if (!(cfg.lambda_grid[k] > 0.0)) throw InvalidParameter("lambda values must be > 0");
    if (k > 0 && !(cfg.lambda_grid[k] < cfg.lambda_grid[k - 1])) {
      throw InvalidParameter("lambda grid must be strictly descending");
    }
  }

  FitResult result;
  const double ybar = label_mean(y);
  if (ybar == 0.0 || ybar == 1.0) {
    result.degenerate_labels = true;
    result.stop = PathStop::DegenerateLabels;
    PathPoint pt;
    const double clipped = std::clamp(ybar, kLabelClip, 1.0 - kLabelClip);
    pt.lambda = cfg.lambda_grid.empty() ? 0.0 : cfg.lambda_grid.front();
    pt.intercept = std::log(clipped) - std::log1p(-clipped);
    pt.coefficients.dimension = x.cols();
    pt.converged = true;
    std::vector<double> zero(x.cols(), 0.0);
    pt.deviance = 2.0 * negative_log_likelihood(x, y, pt.intercept, zero);
    pt.objective = pt.deviance / 2.0;
    pt.objective_trace.push_back(pt.objective);
    result.null_deviance = pt.deviance;
    result.path.push_back(std::move(pt));
    return result;
  }

  PathSolver solver(x, y, cfg, std::move(weights));
  result.null_deviance = solver.deviance();
  const double lmax = solver.lambda_max();
  const auto grid = cfg.lambda_grid.empty() ? lambda_grid(lmax, cfg.n_lambda, cfg.lambda_min_ratio)
                                            : cfg.lambda_grid;

  double prev = std::max(lmax, grid.front());
  double prev_ratio = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    PathPoint pt = solver.solve(grid[k], prev);
    if (pt.active() > cfg.max_active) {
      result.stop = PathStop::MaxActive;
      break;
    }
    const double ratio = result.null_deviance > 0.0 ? 1.0 - pt.deviance / result.null_deviance : 0.0;
    result.path.push_back(std::move(pt));
    prev = grid[k];
    if (cfg.early_stop && result.path.size() >= kMinPathLength && k + 1 < grid.size()) {
      if (ratio > kSaturatedDevRatio || ratio - prev_ratio < kMinDevRatioGain * ratio) {
        result.stop = PathStop::Saturated;
        break;
      }
    }
    prev_ratio = ratio;
  }
  return result;
}

double negative_log_likelihood(const Matrix& x, std::span<const int> y, double intercept,
                               std::span<const double> beta) {
  if (beta.size() != x.cols() || y.size() != x.rows()) {
    throw InvalidInput("dimension mismatch in likelihood evaluation");
  }
  std::vector<double> eta(x.rows(), intercept);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    if (beta[j] == 0.0) continue;
    auto col = x.col(j);
    for (std::size_t i = 0; i < x.rows(); ++i) eta[i] += beta[j] * col[i];
  }
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) s += softplus(eta[i]) - y[i] * eta[i];
  return s;
}

double penalty(std::span<const double> beta, double lambda, double rho,
               std::span<const double> weights) {
  const auto w = resolve_weights(weights, beta.size());
  double pen = 0.0;
  for (std::size_t j = 0; j < beta.size(); ++j) {
    pen += rho * w[j] * w[j] * beta[j] * beta[j] + (1.0 - rho) * w[j] * std::abs(beta[j]);
  }
  return lambda * pen;
}

double penalized_objective(const Matrix& x, std::span<const int> y, double intercept,
                           std::span<const double> beta, double lambda, double rho,
                           std::span<const double> weights) {
  return negative_log_likelihood(x, y, intercept, beta) + penalty(beta, lambda, rho, weights);
}

double smooth_objective(const Matrix& x, std::span<const int> y, double intercept,
                        std::span<const double> beta, double lambda, double rho,
                        std::span<const double> weights) {
  const auto w = resolve_weights(weights, beta.size());
  double quad = 0.0;
  for (std::size_t j = 0; j < beta.size(); ++j) quad += w[j] * w[j] * beta[j] * beta[j];
  return negative_log_likelihood(x, y, intercept, beta) + lambda * rho * quad;
}

Gradient smooth_gradient(const Matrix& x, std::span<const int> y, double intercept,
                         std::span<const double> beta, double lambda, double rho,
                         std::span<const double> weights) {
  if (beta.size() != x.cols() || y.size() != x.rows()) {
    throw InvalidInput("dimension mismatch in gradient evaluation");
  }
  const auto w = resolve_weights(weights, beta.size());
  std::vector<double> eta(x.rows(), intercept);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    auto col = x.col(j);
    for (std::size_t i = 0; i < x.rows(); ++i) eta[i] += beta[j] * col[i];
  }
  std::vector<double> resid(x.rows());
  Gradient g;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    resid[i] = sigmoid(eta[i]) - y[i];
    g.intercept += resid[i];
  }
  g.beta.resize(x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    g.beta[j] = dot(x.col(j), resid) + 2.0 * lambda * rho * w[j] * w[j] * beta[j];
  }
  return g;
}

double kkt_violation(const Matrix& x, std::span<const int> y, double intercept,
                     std::span<const double> beta, double lambda, double rho,
                     std::span<const double> weights) {
  const auto w = resolve_weights(weights, beta.size());
  const auto g = smooth_gradient(x, y, intercept, beta, lambda, rho, weights);
  double worst = std::abs(g.intercept);
  const double l1 = lambda * (1.0 - rho);
  for (std::size_t j = 0; j < beta.size(); ++j) {
    double viol;
    if (beta[j] > 0.0) {
      viol = std::abs(g.beta[j] + l1 * w[j]);
    } else if (beta[j] < 0.0) {
      viol = std::abs(g.beta[j] - l1 * w[j]);
    } else {
      viol = std::max(0.0, std::abs(g.beta[j]) - l1 * w[j]);
    }
    worst = std::max(worst, viol);
  }
  return worst / static_cast<double>(x.rows());
}

double predict_linear(double intercept, const SparseCoefficients& beta,
                      std::span<const double> row) {
  if (row.size() != beta.dimension) {
    throw InvalidInput("design row has " + std::to_string(row.size()) + " columns, model has " +
                       std::to_string(beta.dimension));
  }
  double s = 0.0;
  for (std::size_t k = 0; k < beta.index.size(); ++k) s += beta.value[k] * row[beta.index[k]];
  return intercept + s;
}

double predict_prob(double intercept, const SparseCoefficients& beta,
                    std::span<const double> row) {
  return sigmoid(predict_linear(intercept, beta, row));
}

std::vector<double> linear_predictors(const Matrix& x, double intercept,
                                      const SparseCoefficients& beta) {
  if (x.cols() != beta.dimension) throw InvalidInput("design width does not match coefficients");
  std::vector<double> s(x.rows(), 0.0);
  for (std::size_t k = 0; k < beta.index.size(); ++k) {
    auto col = x.col(beta.index[k]);
    const double b = beta.value[k];
    for (std::size_t i = 0; i < x.rows(); ++i) s[i] += b * col[i];
  }
  for (auto& v : s) v += intercept;
  return s;
}

}  // namespace markovdetect
