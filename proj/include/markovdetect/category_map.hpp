#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace markovdetect {

using Category = std::uint32_t;

/// Which instruction grouping a map implements. Cat1 is built in; the others
/// come from mapping files.
enum class Categorization : int { Cat1 = 1, Cat2 = 2, Cat3 = 3, Cat4 = 4 };

std::string_view to_string(Categorization id);
Categorization categorization_from_int(int value);

/// Mnemonic -> category lookup table.
///
/// Lookups are case-insensitive. A leading `rep`/`repe`/`repne`/`lock`
/// prefix is tried first as a combined key ("rep movsb"); if the map has no
/// entry for the combined form, the base mnemonic is used.
class CategoryMap {
 public:
  /// The 8-class grouping: math, logic, priv, branch, memory, stack, nop,
  /// other (fallback).
  static CategoryMap builtin_cat1();

  /// Mapping-file reader. Format:
  ///
  ///     # comment
  ///     categorization 2            (optional, 1-4; default 2)
  ///     categories asc add and ...  (required, before any entry)
  ///     fallback other              (optional; default "other" or last)
  ///     add add
  ///     rep movsb rep_movs          (last token is the category)
  static CategoryMap parse(std::istream& in, std::string_view source = "<stream>");
  static CategoryMap load(const std::filesystem::path& path);

  CategoryMap(Categorization id, std::vector<std::string> names,
              Category fallback);

  void add(std::string_view mnemonic, Category category);

  Categorization id() const noexcept { return id_; }
  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  Category fallback() const noexcept { return fallback_; }
  std::optional<Category> index_of(std::string_view name) const;

  /// Category for a single (possibly prefixed) mnemonic token sequence.
  Category lookup(std::string_view mnemonic) const;
  Category lookup(std::string_view first, std::string_view second) const;

  /// Entries in insertion order, for dumping a map back to a file.
  const std::vector<std::pair<std::string, Category>>& entries() const noexcept {
    return ordered_;
  }

  void write(std::ostream& out) const;

 private:
  std::optional<Category> find(std::string_view lowered) const;

  Categorization id_;
  std::vector<std::string> names_;
  Category fallback_;
  std::unordered_map<std::string, Category> table_;
  std::vector<std::pair<std::string, Category>> ordered_;
};

bool is_instruction_prefix(std::string_view lowered_token);

}  // namespace markovdetect
