#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "markovdetect/features.hpp"
#include "markovdetect/matrix.hpp"
#include "markovdetect/model.hpp"
#include "markovdetect/trace.hpp"

// Data-parallel hot loops. Each parallel kernel has a serial twin with the
// same arithmetic in the same order per output element, so results are
// bit-identical; tests and the benchmark compare the two.
namespace markovdetect::kernels {

/// Row i = logit features of the posterior mean of counts[i].
Matrix logit_feature_matrix(std::span<const TransitionCounts> counts, double nu);
Matrix logit_feature_matrix_serial(std::span<const TransitionCounts> counts, double nu);

/// Row i = plan.fill_row(row i of x_std).
Matrix design_matrix(const Matrix& x_std, const DesignPlan& plan);
Matrix design_matrix_serial(const Matrix& x_std, const DesignPlan& plan);

std::vector<TransitionCounts> count_batch(std::span<const InstructionSequence> traces,
                                          std::size_t num_categories);
std::vector<TransitionCounts> count_batch_serial(std::span<const InstructionSequence> traces,
                                                 std::size_t num_categories);

/// Pr(B = 1) for each of `draws` posterior draws of P. Only the rows of P
/// that feed the scorer are sampled; logits come straight from the gamma
/// variates so a dominant entry never rounds to probability 1.
std::vector<double> draw_probabilities(const ModelScorer& scorer, const TransitionCounts& counts,
                                       double nu, std::size_t draws, std::uint64_t seed);
std::vector<double> draw_probabilities_serial(const ModelScorer& scorer,
                                              const TransitionCounts& counts, double nu,
                                              std::size_t draws, std::uint64_t seed);

}  // namespace markovdetect::kernels
