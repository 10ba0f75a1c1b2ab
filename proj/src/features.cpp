#include "markovdetect/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "markovdetect/errors.hpp"

namespace markovdetect {

double logit(double p) { return std::log(p) - std::log1p(-p); }

double inv_logit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

FeatureVector logit_features(const TransitionEstimate& p_hat) {
  auto p = p_hat.data();
  FeatureVector x(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] > 0.0 && p[i] < 1.0)) {
      throw InvalidInput("transition probability at index " + std::to_string(i) +
                         " is not strictly inside (0,1); was nu > 0 used?");
    }
    x[i] = logit(p[i]);
  }
  return x;
}

Standardizer::Standardizer(std::vector<double> means, std::vector<double> sds,
                           std::vector<bool> degenerate)
    : means_(std::move(means)), sds_(std::move(sds)), degenerate_(std::move(degenerate)) {
  if (means_.size() != sds_.size() || means_.size() != degenerate_.size()) {
    throw InvalidInput("standardizer vectors differ in length");
  }
  for (std::size_t s = 0; s < sds_.size(); ++s) {
    if (!(sds_[s] >= 0.0)) throw InvalidInput("standardizer sd must be >= 0");
    if (!degenerate_[s] && sds_[s] == 0.0) {
      throw InvalidInput("zero sd on a column not flagged degenerate");
    }
  }
}

Standardizer Standardizer::fit(const Matrix& x) {
  const std::size_t n = x.rows();
  if (n < 2) throw InvalidInput("standardizer needs at least 2 observations");
  std::vector<double> means(x.cols()), sds(x.cols());
  std::vector<bool> degenerate(x.cols());
  for (std::size_t s = 0; s < x.cols(); ++s) {
    auto col = x.col(s);
    double sum = 0.0;
    for (double v : col) sum += v;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    const bool constant = std::all_of(col.begin(), col.end(),
                                      [&](double v) { return v == col.front(); });
    means[s] = mean;
    sds[s] = sd;
    degenerate[s] = constant || sd <= 1e-12 * std::max(1.0, std::abs(mean));
  }
  return Standardizer(std::move(means), std::move(sds), std::move(degenerate));
}

FeatureVector Standardizer::apply(std::span<const double> x) const {
  if (x.size() != size()) {
    throw InvalidInput("feature length " + std::to_string(x.size()) +
                       " does not match standardizer length " + std::to_string(size()));
  }
  FeatureVector z(x.size());
  for (std::size_t s = 0; s < x.size(); ++s) z[s] = apply(s, x[s]);
  return z;
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != size()) throw InvalidInput("matrix width does not match standardizer");
  Matrix z(x.rows(), x.cols());
  for (std::size_t s = 0; s < x.cols(); ++s) {
    auto src = x.col(s);
    auto dst = z.col(s);
    for (std::size_t i = 0; i < x.rows(); ++i) dst[i] = apply(s, src[i]);
  }
  return z;
}

FeatureVector Standardizer::invert(std::span<const double> z) const {
  if (z.size() != size()) throw InvalidInput("feature length does not match standardizer");
  FeatureVector x(z.size());
  for (std::size_t s = 0; s < z.size(); ++s) {
    x[s] = degenerate_[s] ? means_[s] : z[s] * sds_[s] + means_[s];
  }
  return x;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InvalidInput("quantile of empty data");
  if (q <= 0.0) return sorted.front();
  if (q >= 1.0) return sorted.back();
  const double h = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

std::vector<double> compute_knots(std::span<const double> values, std::size_t budget) {
  if (values.size() < 2) throw InvalidInput("knot placement needs at least 2 values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> knots;
  knots.reserve(budget);
  if (sorted.front() == sorted.back()) return knots;
  for (std::size_t l = 1; l <= budget; ++l) {
    const double q = static_cast<double>(l) / static_cast<double>(budget + 1);
    const double k = quantile_sorted(sorted, q);
    if (knots.empty() || k > knots.back()) knots.push_back(k);
  }
  return knots;
}

void spline_basis(double u, std::span<const double> knots, std::span<double> out) {
  if (out.size() != knots.size() + 1) throw InvalidInput("spline basis buffer has wrong size");
  out[0] = u;
  for (std::size_t l = 0; l < knots.size(); ++l) {
    const double d = u - knots[l];
    out[l + 1] = d > 0.0 ? d : 0.0;
  }
}

std::vector<double> spline_basis(double u, std::span<const double> knots) {
  std::vector<double> out(knots.size() + 1);
  spline_basis(u, knots, out);
  return out;
}

TermIndex::TermIndex(std::vector<Term> terms) : terms_(std::move(terms)) {
  for (std::size_t c = 0; c < terms_.size(); ++c) {
    const auto& t = terms_[c];
    if (t.s > t.t || t.l == 0) throw InvalidInput("malformed term (requires s <= t, l >= 1)");
    if (!lookup_.emplace(t, c).second) throw InvalidInput("duplicate term in term index");
  }
}

TermIndex TermIndex::full(const SplineKnots& knots) {
  std::vector<Term> terms;
  for (const auto& [pair, k] : knots.knots) {
    for (std::uint32_t l = 1; l <= k.size() + 1; ++l) terms.push_back({pair.s, pair.t, l});
  }
  return TermIndex(std::move(terms));
}

std::optional<std::size_t> TermIndex::column(const Term& term) const {
  auto it = lookup_.find(term);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

TermIndex TermIndex::subset(std::span<const std::size_t> columns) const {
  std::vector<Term> terms;
  terms.reserve(columns.size());
  for (auto c : columns) terms.push_back(terms_.at(c));
  return TermIndex(std::move(terms));
}

SplineKnots fit_knots(const Matrix& x_std, std::span<const std::uint32_t> active,
                      std::size_t budget, bool interactions) {
  SplineKnots out;
  out.budget = budget;
  std::vector<double> values(x_std.rows());
  for (std::size_t a = 0; a < active.size(); ++a) {
    const auto s = active[a];
    if (s >= x_std.cols()) throw InvalidInput("active predictor out of range");
    const std::size_t last = interactions ? active.size() : a + 1;
    for (std::size_t b = a; b < last; ++b) {
      const auto t = active[b];
      auto xs = x_std.col(s);
      auto xt = x_std.col(t);
      for (std::size_t i = 0; i < values.size(); ++i) values[i] = s == t ? xs[i] : xs[i] * xt[i];
      out.knots.emplace(PredictorPair{s, t},
                        budget == 0 ? std::vector<double>{} : compute_knots(values, budget));
    }
  }
  return out;
}

DesignPlan::DesignPlan(std::span<const std::uint32_t> active, const SplineKnots& knots,
                       const TermIndex& terms) {
  const std::set<std::uint32_t> active_set(active.begin(), active.end());
  auto in_active = [&](std::uint32_t s) { return active_set.count(s) > 0; };
  std::map<PredictorPair, std::size_t> input_of;
  for (const auto& term : terms.terms()) {
    if (!in_active(term.s) || !in_active(term.t)) {
      throw InvalidInput("term (" + std::to_string(term.s) + "," + std::to_string(term.t) +
                         "," + std::to_string(term.l) +
                         ") references a predictor outside the active set");
    }
    const PredictorPair pair{term.s, term.t};
    auto kit = knots.knots.find(pair);
    if (kit == knots.knots.end()) {
      throw InvalidInput("term references a predictor pair without knots");
    }
    if (term.l > kit->second.size() + 1) throw InvalidInput("term references a missing knot");
    auto [it, inserted] = input_of.emplace(pair, inputs_.size());
    if (inserted) inputs_.push_back({term.s, term.t});
    columns_.push_back({it->second, term.l == 1 ? 0.0 : kit->second[term.l - 2], term.l == 1});
  }
}

void DesignPlan::fill_row(std::span<const double> x_std, std::span<double> out) const {
  if (out.size() != columns_.size()) throw InvalidInput("design row buffer has wrong size");
  thread_local std::vector<double> u;
  u.resize(inputs_.size());
  for (std::size_t i = 0; i < inputs_.size(); ++i) {
    const auto [s, t] = inputs_[i];
    if (s >= x_std.size() || t >= x_std.size()) throw InvalidInput("feature vector too short");
    u[i] = s == t ? x_std[s] : x_std[s] * x_std[t];
  }
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const auto& col = columns_[c];
    const double v = u[col.input];
    if (col.linear) {
      out[c] = v;
    } else {
      const double d = v - col.knot;
      out[c] = d > 0.0 ? d : 0.0;
    }
  }
}

std::vector<double> build_design_row(std::span<const double> x_std,
                                     std::span<const std::uint32_t> active,
                                     const SplineKnots& knots, const TermIndex& terms) {
  DesignPlan plan(active, knots, terms);
  std::vector<double> row(plan.columns());
  plan.fill_row(x_std, row);
  return row;
}

}  // namespace markovdetect
