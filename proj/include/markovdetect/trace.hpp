#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "markovdetect/category_map.hpp"

namespace markovdetect {

/// Categorized dynamic trace T_{1:m}.
struct InstructionSequence {
  std::vector<Category> categories;
  std::string source_id;

  std::size_t size() const noexcept { return categories.size(); }
};

/// c x c matrix Z of adjacent-pair counts plus the number of instructions
/// consumed. Invariant: sum(Z) == max(m - 1, 0).
class TransitionCounts {
 public:
  explicit TransitionCounts(std::size_t num_categories);
  /// Takes a row-major count matrix; throws InvalidInput when the
  /// conservation invariant does not hold.
  TransitionCounts(std::size_t num_categories, std::vector<std::uint64_t> counts,
                   std::uint64_t instructions);

  std::size_t num_categories() const noexcept { return c_; }
  std::uint64_t instructions() const noexcept { return m_; }
  std::uint64_t operator()(std::size_t from, std::size_t to) const {
    return z_[from * c_ + to];
  }
  std::span<const std::uint64_t> row(std::size_t from) const {
    return {z_.data() + from * c_, c_};
  }
  std::span<const std::uint64_t> data() const noexcept { return z_; }
  std::uint64_t row_total(std::size_t from) const;
  std::uint64_t total() const;

  /// Consume one instruction. `prev` is the category of the instruction
  /// before it, absent for the first instruction of a trace.
  void add(Category next, std::optional<Category> prev);

  bool operator==(const TransitionCounts&) const = default;

 private:
  std::size_t c_;
  std::uint64_t m_ = 0;
  std::vector<std::uint64_t> z_;
};

/// Reads one instruction per line; the first token is the mnemonic and the
/// rest of the line is ignored. Blank lines and '#' comments are skipped.
InstructionSequence parse_trace(std::istream& in, const CategoryMap& map,
                                std::string source_id = {});
InstructionSequence parse_trace_file(const std::filesystem::path& path,
                                     const CategoryMap& map);

TransitionCounts count_transitions(std::span<const Category> categories,
                                   std::size_t num_categories);
inline TransitionCounts count_transitions(const InstructionSequence& seq,
                                          std::size_t num_categories) {
  return count_transitions(seq.categories, num_categories);
}

TransitionCounts update_counts(TransitionCounts counts, Category next,
                               std::optional<Category> prev);

/// Default minimum trace length for training traces.
inline constexpr std::uint64_t kMinTrainingLength = 2000;

}  // namespace markovdetect
