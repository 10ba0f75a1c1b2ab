#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "markovdetect/dirichlet.hpp"
#include "markovdetect/matrix.hpp"

namespace markovdetect {

using FeatureVector = std::vector<double>;

inline constexpr std::size_t kDefaultKnots = 5;

double logit(double p);
double inv_logit(double eta);

/// Row-major logits of every entry of P-hat; length c^2 regardless of which
/// transitions were observed. Throws InvalidInput on entries at 0 or 1.
FeatureVector logit_features(const TransitionEstimate& p_hat);

/// Per-column centering and scaling fit on a training matrix.
///
/// Uses the sample standard deviation (divisor n - 1). A column is
/// degenerate when all of its values are identical or its sd is below
/// 1e-12 relative to its magnitude; degenerate coordinates standardize to 0.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(std::vector<double> means, std::vector<double> sds,
               std::vector<bool> degenerate);

  static Standardizer fit(const Matrix& x);

  std::size_t size() const noexcept { return means_.size(); }
  const std::vector<double>& means() const noexcept { return means_; }
  const std::vector<double>& sds() const noexcept { return sds_; }
  const std::vector<bool>& degenerate() const noexcept { return degenerate_; }

  double apply(std::size_t s, double x) const {
    return degenerate_[s] ? 0.0 : (x - means_[s]) / sds_[s];
  }
  FeatureVector apply(std::span<const double> x) const;
  Matrix apply(const Matrix& x) const;
  /// x = z * sd + mean; degenerate coordinates come back as the mean.
  FeatureVector invert(std::span<const double> z) const;

  bool operator==(const Standardizer&) const = default;

 private:
  std::vector<double> means_;
  std::vector<double> sds_;
  std::vector<bool> degenerate_;
};

/// Empirical quantile of sorted data, linear interpolation between order
/// statistics: h = (n - 1) q, x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h]).
/// This is the only quantile convention used in the library.
double quantile_sorted(std::span<const double> sorted, double q);

/// Knots at levels l / (K + 1), l = 1..K, with exact duplicates removed.
std::vector<double> compute_knots(std::span<const double> values, std::size_t budget);

/// [u, (u - k_1)_+, ..., (u - k_K)_+]
std::vector<double> spline_basis(double u, std::span<const double> knots);
void spline_basis(double u, std::span<const double> knots, std::span<double> out);

struct PredictorPair {
  std::uint32_t s = 0;
  std::uint32_t t = 0;
  auto operator<=>(const PredictorPair&) const = default;
};

/// Knot vectors for each (s, t) pair entering the spline model. Pairs with
/// s == t are main effects on x_s; s < t are splines in the product x_s x_t.
struct SplineKnots {
  std::size_t budget = kDefaultKnots;
  std::map<PredictorPair, std::vector<double>> knots;

  bool operator==(const SplineKnots&) const = default;
};

/// Coefficient beta_{s,t,l}: l == 1 is the linear term, l >= 2 the hinge at
/// knot l - 1.
struct Term {
  std::uint32_t s = 0;
  std::uint32_t t = 0;
  std::uint32_t l = 1;
  auto operator<=>(const Term&) const = default;
};

/// Bijection between model terms and design-matrix columns.
class TermIndex {
 public:
  TermIndex() = default;
  explicit TermIndex(std::vector<Term> terms);

  /// Every (pair, l) implied by the knot vectors, in pair order.
  static TermIndex full(const SplineKnots& knots);

  std::size_t size() const noexcept { return terms_.size(); }
  const Term& operator[](std::size_t column) const { return terms_[column]; }
  std::span<const Term> terms() const noexcept { return terms_; }
  std::optional<std::size_t> column(const Term& term) const;
  TermIndex subset(std::span<const std::size_t> columns) const;

  bool operator==(const TermIndex& other) const { return terms_ == other.terms_; }

 private:
  std::vector<Term> terms_;
  std::map<Term, std::size_t> lookup_;
};

/// Knots for all pairs over `active` (or main effects only when
/// `interactions` is false), computed from the standardized training matrix.
SplineKnots fit_knots(const Matrix& x_std, std::span<const std::uint32_t> active,
                      std::size_t budget, bool interactions);

/// Validated, precompiled mapping from a standardized feature vector to a
/// design row. Construction checks that every term references predictors
/// in `active` and a knot that exists.
class DesignPlan {
 public:
  DesignPlan(std::span<const std::uint32_t> active, const SplineKnots& knots,
             const TermIndex& terms);

  std::size_t columns() const noexcept { return columns_.size(); }
  void fill_row(std::span<const double> x_std, std::span<double> out) const;

 private:
  struct Input {
    std::uint32_t s;
    std::uint32_t t;
  };
  struct Column {
    std::size_t input;
    double knot;  // ignored for the linear term
    bool linear;
  };
  std::vector<Input> inputs_;
  std::vector<Column> columns_;
};

std::vector<double> build_design_row(std::span<const double> x_std,
                                     std::span<const std::uint32_t> active,
                                     const SplineKnots& knots, const TermIndex& terms);

}  // namespace markovdetect
