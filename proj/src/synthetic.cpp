#include "markovdetect/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "markovdetect/errors.hpp"
#include "markovdetect/rng.hpp"

namespace markovdetect {

namespace {

double unit_uniform(SplitMix64& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

std::size_t sample_row(std::span<const double> row, double u) {
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < row.size(); ++k) {
    acc += row[k];
    if (u < acc) return k;
  }
  return row.size() - 1;
}

void check_template(std::span<const double> t, std::size_t c, const char* which) {
  if (t.size() != c * c) {
    throw InvalidInput(std::string(which) + " template must have c*c entries");
  }
  for (std::size_t j = 0; j < c; ++j) {
    double sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double v = t[j * c + k];
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw InvalidInput(std::string(which) + " template has a negative or non-finite entry");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw InvalidInput(std::string(which) + " template row " + std::to_string(j) +
                         " sums to " + std::to_string(sum) + ", not 1");
    }
  }
}

std::vector<double> perturb(std::span<const double> tmpl, std::size_t c, double concentration,
                            std::uint64_t seed, std::uint64_t program) {
  std::vector<double> p(tmpl.begin(), tmpl.end());
  if (concentration <= 0.0) return p;
  for (std::size_t j = 0; j < c; ++j) {
    SplitMix64 engine(substream_seed(seed, program, 1, j));
    double sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double shape = concentration * tmpl[j * c + k];
      double g = 0.0;
      if (shape > 0.0) {
        std::gamma_distribution<double> gamma(shape, 1.0);
        g = gamma(engine);
      }
      p[j * c + k] = g;
      sum += g;
    }
    if (sum > 0.0) {
      for (std::size_t k = 0; k < c; ++k) p[j * c + k] /= sum;
    } else {
      for (std::size_t k = 0; k < c; ++k) p[j * c + k] = tmpl[j * c + k];
    }
  }
  return p;
}

// A mnemonic per category that `map` sends back to that category.
std::vector<std::string> category_mnemonics(const CategoryMap& map) {
  std::vector<std::string> out(map.size());
  for (const auto& [mnemonic, cat] : map.entries()) {
    if (out[cat].empty() && mnemonic.find(' ') == std::string::npos) out[cat] = mnemonic;
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (!out[k].empty()) continue;
    if (k != map.fallback()) {
      throw InvalidInput("category '" + map.names()[k] + "' has no mnemonic to write it with");
    }
    std::string token = "synthetic_unmapped";
    while (map.lookup(token) != map.fallback()) token += "_";
    out[k] = token;
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (c < 4) throw InvalidParameter("synthetic corpora need at least 4 categories");
  check_template(benign_template, c, "benign");
  check_template(malicious_template, c, "malicious");
  if (!(concentration >= 0.0) || !std::isfinite(concentration)) {
    throw InvalidParameter("concentration must be finite and >= 0");
  }
  if (traces_per_class == 0) throw InvalidParameter("traces_per_class must be >= 1");
}

std::vector<double> default_template(std::size_t c, bool malicious) {
  if (c < 4) throw InvalidParameter("default templates need at least 4 categories");
  std::vector<double> p(c * c);
  for (std::size_t j = 0; j < c; ++j) {
    const bool flip = malicious && (j == 1 || j == 3);
    double sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t kk = flip ? c - 1 - k : k;
      const double w = 2.0 + static_cast<double>((3 * j + 5 * kk) % 7);
      p[j * c + k] = w;
      sum += w;
    }
    for (std::size_t k = 0; k < c; ++k) p[j * c + k] /= sum;
  }
  return p;
}

SyntheticSpec default_synthetic_spec(std::size_t c) {
  SyntheticSpec s;
  s.c = c;
  s.benign_template = default_template(c, false);
  s.malicious_template = default_template(c, true);
  return s;
}

InstructionSequence simulate_chain(std::span<const double> p, std::size_t c, std::size_t length,
                                   std::uint64_t seed) {
  if (p.size() != c * c) throw InvalidInput("transition matrix must have c*c entries");
  InstructionSequence seq;
  seq.categories.reserve(length);
  if (length == 0) return seq;
  SplitMix64 engine(seed);
  auto state = static_cast<std::size_t>(unit_uniform(engine) * static_cast<double>(c));
  if (state >= c) state = c - 1;
  seq.categories.push_back(static_cast<Category>(state));
  for (std::size_t i = 1; i < length; ++i) {
    state = sample_row(p.subspan(state * c, c), unit_uniform(engine));
    seq.categories.push_back(static_cast<Category>(state));
  }
  return seq;
}

std::vector<SyntheticProgram> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<SyntheticProgram> out;
  out.reserve(2 * spec.traces_per_class);
  for (int label = 0; label <= 1; ++label) {
    const auto& tmpl = label ? spec.malicious_template : spec.benign_template;
    for (std::size_t n = 0; n < spec.traces_per_class; ++n) {
      const std::uint64_t program = out.size();
      SyntheticProgram prog;
      prog.label = label;
      prog.matrix = perturb(tmpl, spec.c, spec.concentration, spec.seed, program);
      prog.sequence = simulate_chain(prog.matrix, spec.c, spec.instructions,
                                     substream_seed(spec.seed, program, 2));
      char name[32];
      std::snprintf(name, sizeof name, "%s_%05zu.trace", label ? "mal" : "ben", n);
      prog.sequence.source_id = name;
      out.push_back(std::move(prog));
    }
  }
  return out;
}

std::filesystem::path write_corpus(const std::vector<SyntheticProgram>& programs,
                                   const std::filesystem::path& dir, const CategoryMap& map) {
  const auto mnemonics = category_mnemonics(map);
  std::filesystem::create_directories(dir);
  const auto manifest_path = dir / "manifest.txt";
  std::ofstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot write '" + manifest_path.string() + "'");
  manifest << "# synthetic corpus: <trace> <label>\n";
  std::string buffer;
  for (const auto& prog : programs) {
    buffer.clear();
    for (Category k : prog.sequence.categories) {
      if (k >= mnemonics.size()) throw InvalidInput("program category exceeds the map size");
      buffer += mnemonics[k];
      buffer += '\n';
    }
    const auto path = dir / prog.sequence.source_id;
    std::ofstream out(path, std::ios::binary);
    out << buffer;
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    manifest << prog.sequence.source_id << ' ' << prog.label << '\n';
  }
  if (!manifest) throw IoError("failed writing '" + manifest_path.string() + "'");
  return manifest_path;
}

}  // namespace markovdetect
