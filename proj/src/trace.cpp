#include "markovdetect/trace.hpp"

#include <cctype>
#include <fstream>
#include <istream>
#include <numeric>

#include "markovdetect/errors.hpp"

namespace markovdetect {

TransitionCounts::TransitionCounts(std::size_t num_categories)
    : c_(num_categories), z_(num_categories * num_categories, 0) {
  if (c_ == 0) throw InvalidInput("number of categories must be positive");
}

TransitionCounts::TransitionCounts(std::size_t num_categories,
                                   std::vector<std::uint64_t> counts,
                                   std::uint64_t instructions)
    : c_(num_categories), m_(instructions), z_(std::move(counts)) {
  if (c_ == 0) throw InvalidInput("number of categories must be positive");
  if (z_.size() != c_ * c_) throw InvalidInput("count matrix must be c x c");
  const std::uint64_t expected = m_ > 0 ? m_ - 1 : 0;
  if (total() != expected) {
    throw InvalidInput("transition counts sum to " + std::to_string(total()) +
                       " but m - 1 = " + std::to_string(expected));
  }
}

std::uint64_t TransitionCounts::row_total(std::size_t from) const {
  auto r = row(from);
  return std::accumulate(r.begin(), r.end(), std::uint64_t{0});
}

std::uint64_t TransitionCounts::total() const {
  return std::accumulate(z_.begin(), z_.end(), std::uint64_t{0});
}

void TransitionCounts::add(Category next, std::optional<Category> prev) {
  if (next >= c_) throw InvalidInput("category index out of range");
  if (prev) {
    if (*prev >= c_) throw InvalidInput("previous category index out of range");
    ++z_[*prev * c_ + next];
  }
  ++m_;
}

InstructionSequence parse_trace(std::istream& in, const CategoryMap& map,
                                std::string source_id) {
  InstructionSequence seq;
  seq.source_id = std::move(source_id);
  std::string line;
  while (std::getline(in, line)) {
    std::size_t i = 0;
    const std::size_t n = line.size();
    while (i < n && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i == n || line[i] == '#') continue;
    std::size_t j = i;
    while (j < n && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    std::string_view first(line.data() + i, j - i);
    std::size_t k = j;
    while (k < n && std::isspace(static_cast<unsigned char>(line[k]))) ++k;
    std::size_t e = k;
    while (e < n && !std::isspace(static_cast<unsigned char>(line[e]))) ++e;
    std::string_view second(line.data() + k, e - k);
    seq.categories.push_back(map.lookup(first, second));
  }
  if (in.bad()) throw IoError("error reading trace " + seq.source_id);
  return seq;
}

InstructionSequence parse_trace_file(const std::filesystem::path& path,
                                     const CategoryMap& map) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace " + path.string());
  return parse_trace(in, map, path.string());
}

TransitionCounts count_transitions(std::span<const Category> categories,
                                   std::size_t num_categories) {
  std::vector<std::uint64_t> z(num_categories * num_categories, 0);
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i] >= num_categories) {
      throw InvalidInput("category " + std::to_string(categories[i]) + " at position " +
                         std::to_string(i) + " is not < " + std::to_string(num_categories));
    }
    if (i > 0) ++z[categories[i - 1] * num_categories + categories[i]];
  }
  return TransitionCounts(num_categories, std::move(z), categories.size());
}

TransitionCounts update_counts(TransitionCounts counts, Category next,
                               std::optional<Category> prev) {
  counts.add(next, prev);
  return counts;
}

}  // namespace markovdetect
