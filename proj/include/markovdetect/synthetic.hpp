#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "markovdetect/category_map.hpp"
#include "markovdetect/trace.hpp"

namespace markovdetect {

/// Two-class generator of category Markov chains. Each program draws its
/// own transition matrix with rows ~ Dirichlet(concentration * template
/// row), then runs the chain from a uniform start state.
struct SyntheticSpec {
  std::size_t c = 8;
  /// Row-major c x c, row-stochastic.
  std::vector<double> benign_template;
  std::vector<double> malicious_template;
  /// 0 disables the per-program perturbation.
  double concentration = 200.0;
  std::size_t traces_per_class = 500;
  std::size_t instructions = 5000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Templates for c categories. The malicious template differs from the
/// benign one in rows 1 and 3 only; every entry is at least 1/(4c).
std::vector<double> default_template(std::size_t c, bool malicious);
SyntheticSpec default_synthetic_spec(std::size_t c = 8);

InstructionSequence simulate_chain(std::span<const double> p, std::size_t c, std::size_t length,
                                   std::uint64_t seed);

struct SyntheticProgram {
  InstructionSequence sequence;
  int label = 0;
  /// The program's own transition matrix.
  std::vector<double> matrix;
};

/// Benign programs first, then malicious; program i uses substreams of
/// (seed, i) only.
std::vector<SyntheticProgram> generate_synthetic(const SyntheticSpec& spec);

/// One trace file per program plus `manifest.txt` in `dir`. Categories are
/// written as mnemonics that `map` sends back to the same category.
std::filesystem::path write_corpus(const std::vector<SyntheticProgram>& programs,
                                   const std::filesystem::path& dir, const CategoryMap& map);

}  // namespace markovdetect
