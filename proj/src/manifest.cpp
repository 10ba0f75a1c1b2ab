#include "markovdetect/manifest.hpp"

#include <exception>
#include <fstream>
#include <sstream>

#include "markovdetect/errors.hpp"

namespace markovdetect {

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest '" + manifest.string() + "'");
  const auto base = manifest.parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(line);
    std::string path, label, extra;
    if (!(tokens >> path) || path.front() == '#') continue;
    auto fail = [&](const std::string& why) {
      throw ParseError(manifest.string() + ":" + std::to_string(line_no) + ": " + why, line_no);
    };
    if (!(tokens >> label)) fail("missing label after trace path");
    if (tokens >> extra) fail("unexpected text after label");
    if (label != "0" && label != "1") fail("label must be 0 or 1, got '" + label + "'");
    std::filesystem::path p(path);
    out.push_back({p.is_absolute() ? p : base / p, path, label == "1" ? 1 : 0});
  }
  if (in.bad()) throw IoError("failed reading manifest '" + manifest.string() + "'");
  return out;
}

std::vector<LabeledCounts> load_dataset(const std::vector<ManifestEntry>& entries,
                                        const CategoryMap& map, bool parallel) {
  std::vector<LabeledCounts> out(entries.size(), LabeledCounts{TransitionCounts(map.size()), 0, {}});
  std::vector<std::exception_ptr> errors(entries.size());
  const auto n = static_cast<std::ptrdiff_t>(entries.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& e = entries[static_cast<std::size_t>(i)];
    try {
      const auto seq = parse_trace_file(e.path, map);
      out[static_cast<std::size_t>(i)] = {count_transitions(seq, map.size()), e.label, e.id};
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return out;
}

}  // namespace markovdetect
