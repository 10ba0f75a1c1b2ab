#include "markovdetect/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "markovdetect/errors.hpp"

namespace markovdetect {

namespace {

using nlohmann::json;

constexpr const char* kFormatName = "markovdetect-model";

json standardizer_to_json(const Standardizer& s) {
  std::vector<int> degenerate(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) degenerate[i] = s.degenerate()[i] ? 1 : 0;
  return {{"means", s.means()}, {"sds", s.sds()}, {"degenerate", degenerate}};
}

Standardizer standardizer_from_json(const json& j) {
  auto means = j.at("means").get<std::vector<double>>();
  auto sds = j.at("sds").get<std::vector<double>>();
  auto flags = j.at("degenerate").get<std::vector<int>>();
  std::vector<bool> degenerate(flags.size());
  for (std::size_t i = 0; i < flags.size(); ++i) degenerate[i] = flags[i] != 0;
  return Standardizer(std::move(means), std::move(sds), std::move(degenerate));
}

json metadata_to_json(const ModelMetadata& m) {
  return {{"seed", m.seed},           {"n_train", m.n_train},
          {"n_filtered", m.n_filtered}, {"lambda1", m.lambda1},
          {"lambda2", m.lambda2},     {"lambda3", m.lambda3},
          {"rho3", m.rho3},           {"inner_folds", m.inner_folds},
          {"fdr_target", m.fdr_target}, {"sample_fraction", m.sample_fraction},
          {"criterion", m.criterion},
          {"warnings", m.warnings}};
}

ModelMetadata metadata_from_json(const json& j) {
  ModelMetadata m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.n_train = j.at("n_train").get<std::size_t>();
  m.n_filtered = j.at("n_filtered").get<std::size_t>();
  m.lambda1 = j.at("lambda1").get<double>();
  m.lambda2 = j.at("lambda2").get<double>();
  m.lambda3 = j.at("lambda3").get<double>();
  m.rho3 = j.at("rho3").get<double>();
  m.inner_folds = j.at("inner_folds").get<std::size_t>();
  m.fdr_target = j.at("fdr_target").get<double>();
  m.sample_fraction = j.at("sample_fraction").get<double>();
  m.criterion = j.at("criterion").get<std::string>();
  m.warnings = j.at("warnings").get<std::vector<std::string>>();
  return m;
}

TrainedModel model_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("model file is not a JSON object", 0);
  if (!j.contains("format") || j.at("format") != kFormatName) {
    throw VersionError("not a markovdetect model file (format field missing or unknown)");
  }
  const int version = j.at("schema_version").get<int>();
  if (version != kModelSchemaVersion) {
    throw VersionError("unsupported model schema_version " + std::to_string(version) +
                       " (this build reads version " + std::to_string(kModelSchemaVersion) +
                       ")");
  }
  TrainedModel m;
  m.categorization = categorization_from_int(j.at("categorization").get<int>());
  m.num_categories = j.at("num_categories").get<std::size_t>();
  m.nu = j.at("nu").get<double>();
  m.kind = model_kind_from_string(j.at("kind").get<std::string>());
  m.standardizer = standardizer_from_json(j.at("standardizer"));
  m.active = j.at("active_predictors").get<std::vector<std::uint32_t>>();
  m.knots.budget = j.at("knot_budget").get<std::size_t>();
  for (const auto& p : j.at("pairs")) {
    m.knots.knots.emplace(PredictorPair{p.at("s").get<std::uint32_t>(), p.at("t").get<std::uint32_t>()},
                          p.at("knots").get<std::vector<double>>());
  }
  m.terms = TermIndex::full(m.knots);
  for (const auto& c : j.at("coefficients")) {
    if (!c.is_array() || c.size() != 4) {
      throw ParseError("coefficient entries must be [s, t, l, value]", 0);
    }
    m.coefficients.push_back({Term{c[0].get<std::uint32_t>(), c[1].get<std::uint32_t>(),
                                   c[2].get<std::uint32_t>()},
                              c[3].get<double>()});
  }
  m.intercept = j.at("intercept").get<double>();
  const auto& pc = j.at("prior_correction");
  if (!pc.is_null()) {
    m.prior_correction = PriorCorrection{pc.at("pi1").get<double>(),
                                         pc.at("sample_fraction").get<double>(),
                                         pc.at("corrected_intercept").get<double>()};
  }
  m.threshold = j.at("threshold").get<double>();
  m.metadata = metadata_from_json(j.at("metadata"));
  m.validate();
  return m;
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  return kind == ModelKind::Linear ? "linear" : "interaction-spline";
}

ModelKind model_kind_from_string(std::string_view name) {
  if (name == "linear") return ModelKind::Linear;
  if (name == "interaction-spline" || name == "spline") return ModelKind::InteractionSpline;
  throw InvalidParameter("unknown model kind '" + std::string(name) +
                         "' (expected linear or interaction-spline)");
}

void TrainedModel::validate() const {
  const std::size_t p = num_categories * num_categories;
  if (standardizer.size() != p) {
    throw InvalidInput("standardizer width " + std::to_string(standardizer.size()) +
                       " does not match " + std::to_string(p) + " features");
  }
  if (!(nu > 0.0)) throw InvalidInput("model nu must be > 0");
  const std::set<std::uint32_t> act(active.begin(), active.end());
  for (auto s : active) {
    if (s >= p) throw InvalidInput("active predictor index out of range");
  }
  for (const auto& [pair, kv] : knots.knots) {
    if (!act.count(pair.s) || !act.count(pair.t) || pair.s > pair.t) {
      throw InvalidInput("knot pair references a predictor outside the active set");
    }
    if (!std::is_sorted(kv.begin(), kv.end()) ||
        std::adjacent_find(kv.begin(), kv.end()) != kv.end()) {
      throw InvalidInput("knots must be strictly increasing");
    }
  }
  for (const auto& c : coefficients) {
    if (!terms.column(c.term)) {
      throw InvalidInput("coefficient term (" + std::to_string(c.term.s) + "," +
                         std::to_string(c.term.t) + "," + std::to_string(c.term.l) +
                         ") is not in the term index");
    }
    if (!std::isfinite(c.value)) throw InvalidInput("non-finite coefficient");
  }
  if (prior_correction) {
    const auto& pc = *prior_correction;
    const double expected =
        intercept - std::log((1.0 - pc.pi1) / pc.pi1 * pc.sample_fraction / (1.0 - pc.sample_fraction));
    if (expected != pc.corrected_intercept) {
      throw InvalidInput("prior-corrected intercept is inconsistent with pi1 and sample fraction");
    }
  }
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw InvalidInput("threshold must lie in [0, 1]");
}

ModelScorer::ModelScorer(const TrainedModel& model) : intercept_(model.effective_intercept()) {
  std::map<PredictorPair, std::vector<double>> coef;
  for (const auto& c : model.coefficients) {
    const PredictorPair pair{c.term.s, c.term.t};
    auto kit = model.knots.knots.find(pair);
    if (kit == model.knots.knots.end() || c.term.l == 0 || c.term.l > kit->second.size() + 1) {
      throw InvalidInput("coefficient references a missing spline term");
    }
    auto& v = coef[pair];
    v.resize(kit->second.size() + 1, 0.0);
    v[c.term.l - 1] += c.value;
  }
  std::set<std::uint32_t> used;
  for (const auto& [pair, v] : coef) {
    used.insert(pair.s);
    used.insert(pair.t);
  }
  features_.assign(used.begin(), used.end());
  std::map<std::uint32_t, std::size_t> pos;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const auto s = features_[i];
    if (s >= model.standardizer.size()) throw InvalidInput("feature index out of range");
    pos[s] = i;
    means_.push_back(model.standardizer.means()[s]);
    sds_.push_back(model.standardizer.sds()[s]);
    degenerate_.push_back(model.standardizer.degenerate()[s] ? 1 : 0);
  }
  for (auto& [pair, v] : coef) {
    blocks_.push_back({pos[pair.s], pos[pair.t], model.knots.knots.at(pair), std::move(v)});
  }
}

double ModelScorer::linear_selected(std::span<const double> raw) const {
  if (raw.size() != features_.size()) throw InvalidInput("selected feature vector has wrong length");
  thread_local std::vector<double> z;
  z.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    z[i] = degenerate_[i] ? 0.0 : (raw[i] - means_[i]) / sds_[i];
  }
  double s = 0.0;
  for (const auto& b : blocks_) {
    const double u = b.a == b.b ? z[b.a] : z[b.a] * z[b.b];
    double part = b.coef[0] * u;
    for (std::size_t l = 0; l < b.knots.size(); ++l) {
      const double d = u - b.knots[l];
      if (d > 0.0) part += b.coef[l + 1] * d;
    }
    s += part;
  }
  return intercept_ + s;
}

double ModelScorer::linear(std::span<const double> logits) const {
  thread_local std::vector<double> raw;
  raw.resize(features_.size());
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i] >= logits.size()) throw InvalidInput("feature vector too short for model");
    raw[i] = logits[features_[i]];
  }
  return linear_selected(raw);
}

void save_model(const TrainedModel& model, std::ostream& out) {
  model.validate();
  json pairs = json::array();
  for (const auto& [pair, kv] : model.knots.knots) {
    pairs.push_back({{"s", pair.s}, {"t", pair.t}, {"knots", kv}});
  }
  json coefs = json::array();
  for (const auto& c : model.coefficients) {
    coefs.push_back(json::array({c.term.s, c.term.t, c.term.l, c.value}));
  }
  json pc = nullptr;
  if (model.prior_correction) {
    pc = {{"pi1", model.prior_correction->pi1},
          {"sample_fraction", model.prior_correction->sample_fraction},
          {"corrected_intercept", model.prior_correction->corrected_intercept}};
  }
  json j = {{"format", kFormatName},
            {"schema_version", kModelSchemaVersion},
            {"categorization", static_cast<int>(model.categorization)},
            {"num_categories", model.num_categories},
            {"nu", model.nu},
            {"kind", std::string(to_string(model.kind))},
            {"standardizer", standardizer_to_json(model.standardizer)},
            {"active_predictors", model.active},
            {"knot_budget", model.knots.budget},
            {"pairs", pairs},
            {"coefficients", coefs},
            {"intercept", model.intercept},
            {"prior_correction", pc},
            {"threshold", model.threshold},
            {"metadata", metadata_to_json(model.metadata)}};
  out << j.dump(1) << '\n';
  if (!out) throw IoError("failed writing model");
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  save_model(model, out);
}

TrainedModel load_model(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed model file: ") + e.what(), e.byte);
  }
  try {
    return model_from_json(j);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model file has missing or mistyped fields: ") + e.what(), 0);
  }
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file '" + path.string() + "'");
  return load_model(in);
}

}  // namespace markovdetect
