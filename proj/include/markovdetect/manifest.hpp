#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "markovdetect/category_map.hpp"
#include "markovdetect/pipeline.hpp"

namespace markovdetect {

/// One "<trace-path> <label>" line. `path` is resolved against the
/// manifest's directory; `id` keeps the text as written.
struct ManifestEntry {
  std::filesystem::path path;
  std::string id;
  int label = 0;
};

/// Blank lines and '#' comments are skipped. Throws ParseError with the
/// 1-based line number on malformed lines or labels other than 0/1.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);

/// Parses and counts every listed trace (in parallel when enabled).
std::vector<LabeledCounts> load_dataset(const std::vector<ManifestEntry>& entries,
                                        const CategoryMap& map, bool parallel = true);

}  // namespace markovdetect
