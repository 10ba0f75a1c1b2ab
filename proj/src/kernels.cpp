#include "markovdetect/kernels.hpp"

#include <cmath>
#include <cstddef>

#include "markovdetect/dirichlet.hpp"
#include "markovdetect/errors.hpp"

namespace markovdetect::kernels {

namespace {

void fill_logit_row(const TransitionCounts& counts, double nu, std::size_t i, Matrix& out) {
  const auto features = logit_features(posterior_mean(counts, nu));
  if (features.size() != out.cols()) {
    throw InvalidInput("trace " + std::to_string(i) + " has a different category count");
  }
  out.set_row(i, features);
}

void fill_design_row(const Matrix& x_std, const DesignPlan& plan, std::size_t i,
                     std::vector<double>& x_row, std::vector<double>& d_row, Matrix& out) {
  for (std::size_t j = 0; j < x_std.cols(); ++j) x_row[j] = x_std(i, j);
  plan.fill_row(x_row, d_row);
  for (std::size_t j = 0; j < d_row.size(); ++j) out(i, j) = d_row[j];
}

// Draw r: sample the needed rows, form exact logits from the gammas and
// score. `rows` lists the distinct rows of P that the scorer reads.
struct DrawContext {
  const ModelScorer& scorer;
  const TransitionCounts& counts;
  double nu;
  std::uint64_t seed;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> feature_row;  // slot into `rows` per scorer feature
  std::vector<std::size_t> feature_col;

  DrawContext(const ModelScorer& s, const TransitionCounts& z, double nu_, std::uint64_t seed_)
      : scorer(s), counts(z), nu(nu_), seed(seed_) {
    const std::size_t c = z.num_categories();
    for (auto f : s.features()) {
      const std::size_t j = f / c;
      if (j >= c) throw InvalidInput("model feature index exceeds trace dimension");
      if (rows.empty() || rows.back() != j) rows.push_back(j);
      feature_row.push_back(rows.size() - 1);
      feature_col.push_back(f % c);
    }
  }

  double probability(std::uint64_t r, std::vector<double>& gammas, std::vector<double>& raw) const {
    const std::size_t c = counts.num_categories();
    gammas.resize(rows.size() * c);
    raw.resize(feature_row.size());
    for (std::size_t a = 0; a < rows.size(); ++a) {
      draw_row_gammas(counts, rows[a], nu, seed, r, std::span<double>(gammas).subspan(a * c, c));
    }
    for (std::size_t i = 0; i < feature_row.size(); ++i) {
      const double* g = gammas.data() + feature_row[i] * c;
      const std::size_t k = feature_col[i];
      double rest = 0.0;
      for (std::size_t l = 0; l < c; ++l) {
        if (l != k) rest += g[l];
      }
      raw[i] = std::log(g[k]) - std::log(rest);
    }
    return inv_logit(scorer.linear_selected(raw));
  }
};

}  // namespace

Matrix logit_feature_matrix(std::span<const TransitionCounts> counts, double nu) {
  if (counts.empty()) return {};
  const std::size_t c = counts.front().num_categories();
  Matrix out(counts.size(), c * c);
  const auto n = static_cast<std::ptrdiff_t>(counts.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      fill_logit_row(counts[static_cast<std::size_t>(i)], nu, static_cast<std::size_t>(i), out);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

Matrix logit_feature_matrix_serial(std::span<const TransitionCounts> counts, double nu) {
  if (counts.empty()) return {};
  const std::size_t c = counts.front().num_categories();
  Matrix out(counts.size(), c * c);
  for (std::size_t i = 0; i < counts.size(); ++i) fill_logit_row(counts[i], nu, i, out);
  return out;
}

Matrix design_matrix(const Matrix& x_std, const DesignPlan& plan) {
  Matrix out(x_std.rows(), plan.columns());
  const auto n = static_cast<std::ptrdiff_t>(x_std.rows());
#pragma omp parallel
  {
    std::vector<double> x_row(x_std.cols()), d_row(plan.columns());
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      fill_design_row(x_std, plan, static_cast<std::size_t>(i), x_row, d_row, out);
    }
  }
  return out;
}

Matrix design_matrix_serial(const Matrix& x_std, const DesignPlan& plan) {
  Matrix out(x_std.rows(), plan.columns());
  std::vector<double> x_row(x_std.cols()), d_row(plan.columns());
  for (std::size_t i = 0; i < x_std.rows(); ++i) fill_design_row(x_std, plan, i, x_row, d_row, out);
  return out;
}

std::vector<TransitionCounts> count_batch(std::span<const InstructionSequence> traces,
                                          std::size_t num_categories) {
  std::vector<TransitionCounts> out(traces.size(), TransitionCounts(num_categories));
  const auto n = static_cast<std::ptrdiff_t>(traces.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] =
          count_transitions(traces[static_cast<std::size_t>(i)], num_categories);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

std::vector<TransitionCounts> count_batch_serial(std::span<const InstructionSequence> traces,
                                                 std::size_t num_categories) {
  std::vector<TransitionCounts> out;
  out.reserve(traces.size());
  for (const auto& t : traces) out.push_back(count_transitions(t, num_categories));
  return out;
}

std::vector<double> draw_probabilities(const ModelScorer& scorer, const TransitionCounts& counts,
                                       double nu, std::size_t draws, std::uint64_t seed) {
  const DrawContext ctx(scorer, counts, nu, seed);
  std::vector<double> out(draws);
  const auto n = static_cast<std::ptrdiff_t>(draws);
  std::exception_ptr error;
#pragma omp parallel
  {
    std::vector<double> gammas, raw;
#pragma omp for schedule(static)
    for (std::ptrdiff_t r = 0; r < n; ++r) {
      try {
        out[static_cast<std::size_t>(r)] = ctx.probability(static_cast<std::uint64_t>(r), gammas, raw);
      } catch (...) {
#pragma omp critical
        if (!error) error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

std::vector<double> draw_probabilities_serial(const ModelScorer& scorer,
                                              const TransitionCounts& counts, double nu,
                                              std::size_t draws, std::uint64_t seed) {
  const DrawContext ctx(scorer, counts, nu, seed);
  std::vector<double> out(draws), gammas, raw;
  for (std::size_t r = 0; r < draws; ++r) out[r] = ctx.probability(r, gammas, raw);
  return out;
}

}  // namespace markovdetect::kernels
