#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "markovdetect/category_map.hpp"
#include "markovdetect/errors.hpp"
#include "markovdetect/evaluation.hpp"
#include "markovdetect/manifest.hpp"
#include "markovdetect/model.hpp"
#include "markovdetect/monitor.hpp"
#include "markovdetect/pipeline.hpp"
#include "markovdetect/synthetic.hpp"
#include "markovdetect/trace.hpp"

namespace fs = std::filesystem;
using namespace markovdetect;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitMalware = 1;
constexpr int kExitError = 2;

struct MapOptions {
  std::string map_file;
  int categorization = 1;
};

void add_map_options(CLI::App* cmd, MapOptions& o) {
  cmd->add_option("--map", o.map_file, "Category map file (overrides --categorization)");
  cmd->add_option("--categorization", o.categorization, "Built-in grouping 1-4")
      ->check(CLI::Range(1, 4));
}

CategoryMap resolve_map(const std::string& file, int categorization) {
  if (!file.empty()) return CategoryMap::load(file);
  if (categorization == 1) return CategoryMap::builtin_cat1();
  const fs::path path =
      fs::path(MARKOVDETECT_DATA_DIR) / "categorizations" / ("cat" + std::to_string(categorization) + ".map");
  return CategoryMap::load(path);
}

CategoryMap map_for_model(const TrainedModel& model, const std::string& file) {
  CategoryMap map = resolve_map(file, static_cast<int>(model.categorization));
  if (map.id() != model.categorization) {
    throw InvalidInput("category map is " + std::string(to_string(map.id())) + " but the model was trained on " +
                       std::string(to_string(model.categorization)));
  }
  if (map.size() != model.num_categories) {
    throw InvalidInput("category map has " + std::to_string(map.size()) +
                       " categories but the model expects " + std::to_string(model.num_categories));
  }
  return map;
}

CvCriterion parse_criterion(const std::string& s) {
  if (s == "deviance") return CvCriterion::Deviance;
  if (s == "misclassification") return CvCriterion::Misclassification;
  if (s == "fdr" || s == "detection-at-fdr") return CvCriterion::DetectionAtFdr;
  throw InvalidParameter("unknown criterion '" + s + "'");
}

struct TrainOptions {
  MapOptions map;
  std::string manifest;
  std::string kind = "interaction-spline";
  std::size_t knots = kDefaultKnots;
  double nu = kDefaultNu;
  double rho_screen = 0.5;
  std::vector<double> rho3_grid;
  std::size_t n_lambda = 100;
  double lambda_min_ratio = 1e-4;
  std::size_t max_active = kDefaultMaxActive;
  std::size_t inner_folds = 10;
  std::uint64_t seed = 0;
  std::uint64_t min_length = kMinTrainingLength;
  std::string criterion = "deviance";
  double fdr_target = 0.001;
  std::optional<double> pi1, lambda1, lambda2, lambda3, rho3;
  bool serial = false;
};

void add_train_options(CLI::App* cmd, TrainOptions& o) {
  add_map_options(cmd, o.map);
  cmd->add_option("--manifest", o.manifest, "Manifest of '<trace> <label>' lines")->required();
  cmd->add_option("--kind", o.kind, "linear or interaction-spline");
  cmd->add_option("--knots", o.knots, "Knot budget K per spline");
  cmd->add_option("--nu", o.nu, "Dirichlet prior concentration");
  cmd->add_option("--rho-screen", o.rho_screen, "Mixing weight for the screening and spline steps");
  cmd->add_option("--rho3-grid", o.rho3_grid, "Candidate mixing weights for the adaptive step");
  cmd->add_option("--n-lambda", o.n_lambda, "Path length per fit");
  cmd->add_option("--lambda-min-ratio", o.lambda_min_ratio, "Smallest lambda as a fraction of lambda_max");
  cmd->add_option("--max-active", o.max_active, "Cap on nonzero coefficients");
  cmd->add_option("--inner-folds", o.inner_folds, "Folds for per-step tuning");
  cmd->add_option("--seed", o.seed, "Seed for fold assignment");
  cmd->add_option("--min-length", o.min_length, "Shortest trace used for training");
  cmd->add_option("--criterion", o.criterion, "deviance, misclassification or fdr");
  cmd->add_option("--fdr-target", o.fdr_target, "False-positive target for the threshold");
  cmd->add_option("--pi1", o.pi1, "Deployment malware rate for prior correction");
  cmd->add_option("--lambda1", o.lambda1, "Fixed screening penalty");
  cmd->add_option("--lambda2", o.lambda2, "Fixed spline-step penalty");
  cmd->add_option("--lambda3", o.lambda3, "Fixed adaptive-step penalty");
  cmd->add_option("--rho3", o.rho3, "Fixed adaptive-step mixing weight");
  cmd->add_flag("--serial", o.serial, "Disable OpenMP kernels");
}

TrainConfig to_config(const TrainOptions& o, const CategoryMap& map) {
  TrainConfig cfg;
  cfg.kind = model_kind_from_string(o.kind);
  cfg.categorization = map.id();
  cfg.knots = o.knots;
  cfg.nu = o.nu;
  cfg.rho_screen = o.rho_screen;
  if (!o.rho3_grid.empty()) cfg.rho3_grid = o.rho3_grid;
  cfg.n_lambda = o.n_lambda;
  cfg.lambda_min_ratio = o.lambda_min_ratio;
  cfg.max_active = o.max_active;
  cfg.inner_folds = o.inner_folds;
  cfg.seed = o.seed;
  cfg.min_length = o.min_length;
  cfg.criterion = parse_criterion(o.criterion);
  cfg.fdr_target = o.fdr_target;
  cfg.pi1 = o.pi1;
  cfg.lambda1 = o.lambda1;
  cfg.lambda2 = o.lambda2;
  cfg.lambda3 = o.lambda3;
  cfg.rho3 = o.rho3;
  cfg.parallel = !o.serial;
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::string feature_name(std::uint32_t s, std::size_t c, const CategoryMap* map) {
  const std::size_t j = s / c, k = s % c;
  if (map && map->size() == c) return map->names()[j] + "->" + map->names()[k];
  return std::to_string(j) + "->" + std::to_string(k);
}

// ---------------------------------------------------------------- commands

int run_train(const TrainOptions& o, const std::string& out_path, const std::string& report_path) {
  const CategoryMap map = resolve_map(o.map.map_file, o.map.categorization);
  const auto data = load_dataset(read_manifest(o.manifest), map, !o.serial);
  const TrainingResult result = train(data, to_config(o, map));
  std::ostringstream model_text;
  save_model(result.model, model_text);
  write_text(out_path, model_text.str());
  if (!report_path.empty()) {
    nlohmann::json j;
    j["step1_active"] = result.report.step1_active.size();
    j["step2_candidates"] = result.report.step2_candidates;
    j["step2_terms"] = result.report.step2_terms.size();
    j["step3_terms"] = result.report.step3_terms.size();
    j["filtered_short"] = result.report.filtered_short;
    j["warnings"] = result.report.warnings;
    write_text(report_path, j.dump(1) + "\n");
  }
  for (const auto& w : result.report.warnings) std::cerr << "warning: " << w << '\n';
  return kExitOk;
}

struct ClassifyOptions {
  std::string model;
  std::string map_file;
  std::vector<std::string> traces;
  std::string manifest;
  bool gate = false;
  std::optional<double> tau;
};

int run_classify(const ClassifyOptions& o) {
  const TrainedModel model = load_model(fs::path(o.model));
  const CategoryMap map = map_for_model(model, o.map_file);
  const ModelScorer scorer(model);
  std::vector<std::pair<std::string, fs::path>> inputs;
  for (const auto& t : o.traces) inputs.emplace_back(t, t);
  if (!o.manifest.empty()) {
    for (const auto& e : read_manifest(o.manifest)) inputs.emplace_back(e.id, e.path);
  }
  if (inputs.empty()) throw InvalidInput("no traces given (pass trace files or --manifest)");
  const double tau = o.tau.value_or(model.threshold);
  bool any = false;
  for (const auto& [id, path] : inputs) {
    const auto seq = parse_trace_file(path, map);
    const auto counts = count_transitions(seq, map.size());
    Classification c = classify(model, scorer, counts);
    c.malicious = c.probability > tau;
    any = any || c.malicious;
    nlohmann::json j = {{"trace", id},
                        {"instructions", counts.instructions()},
                        {"probability", c.probability},
                        {"linear_predictor", c.linear_predictor},
                        {"decision", c.malicious ? "malicious" : "benign"}};
    std::cout << j.dump() << '\n';
  }
  return o.gate && any ? kExitMalware : kExitOk;
}

struct MonitorOptions {
  std::string model;
  std::string map_file;
  std::string trace = "-";
  std::size_t draws = kDefaultDraws;
  std::uint64_t seed = 0;
  std::uint64_t cadence = 1000;
  double ci_width = 0.1;
  std::optional<double> tau;
  std::uint64_t m_max = 3'500'000;
  std::size_t chunk = 4096;
  bool stop_on_decision = false;
  bool serial = false;
};

int run_monitor(const MonitorOptions& o) {
  const TrainedModel model = load_model(fs::path(o.model));
  const CategoryMap map = map_for_model(model, o.map_file);
  DecisionRule rule;
  rule.tau = std::clamp(o.tau.value_or(model.threshold), 1e-12, 1.0 - 1e-12);
  rule.ci_width_max = o.ci_width;
  rule.cadence = o.cadence;
  rule.m_max = o.m_max;
  OnlineMonitor monitor(model, rule, o.draws, o.seed, !o.serial);

  std::ifstream file;
  std::istream* in = &std::cin;
  if (o.trace != "-") {
    file.open(o.trace);
    if (!file) throw IoError("cannot open trace '" + o.trace + "'");
    in = &file;
  }
  std::vector<Category> chunk;
  chunk.reserve(o.chunk);
  bool stop = false;
  auto flush = [&]() {
    for (const auto& e : monitor.step(chunk)) {
      std::cout << to_json_line(e) << '\n';
      if (o.stop_on_decision && e.decision != Decision::Undecided) stop = true;
    }
    std::cout.flush();
    chunk.clear();
  };
  std::string line;
  while (!stop && std::getline(*in, line)) {
    std::istringstream tokens(line);
    std::string first, second;
    if (!(tokens >> first) || first.front() == '#') continue;
    tokens >> second;
    chunk.push_back(map.lookup(first, second));
    if (chunk.size() >= o.chunk) flush();
  }
  if (!stop) {
    flush();
    if (auto e = monitor.finish()) std::cout << to_json_line(*e) << '\n';
  }
  return kExitOk;
}

struct CvOptions {
  TrainOptions train;
  std::size_t folds = 10;
  std::uint64_t fold_seed = 0;
  std::string out;
  std::string roc_csv;
  std::vector<double> fdr_levels = {0.01, 0.001};
};

int run_cv(const CvOptions& o) {
  const CategoryMap map = resolve_map(o.train.map.map_file, o.train.map.categorization);
  const auto data = load_dataset(read_manifest(o.train.manifest), map, !o.train.serial);
  const EvalReport report = kfold_cv(data, o.folds, to_config(o.train, map), o.fold_seed, o.fdr_levels);
  write_text(o.out, report_to_json(report));
  if (!o.roc_csv.empty()) {
    std::ostringstream csv;
    write_roc_csv(report.roc, csv);
    write_text(o.roc_csv, csv.str());
  }
  std::cerr << "overall accuracy " << report.overall_accuracy << ", auc " << report.roc.auc << '\n';
  return kExitOk;
}

struct RocOptions {
  std::string scores;
  std::string model;
  std::string manifest;
  std::string map_file;
  std::string out;
  std::string csv;
  std::vector<double> fdr_levels = {0.01, 0.001};
};

int run_roc(const RocOptions& o) {
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<double> scores;
  if (!o.scores.empty()) {
    std::ifstream in(o.scores);
    if (!in) throw IoError("cannot open scores file '" + o.scores + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line.front() == '#' || line.rfind("id,", 0) == 0) continue;
      std::istringstream row(line);
      std::string id, label, score;
      if (!std::getline(row, id, ',') || !std::getline(row, label, ',') || !std::getline(row, score)) {
        throw ParseError(o.scores + ":" + std::to_string(line_no) + ": expected id,label,score", line_no);
      }
      try {
        ids.push_back(id);
        labels.push_back(std::stoi(label));
        scores.push_back(std::stod(score));
      } catch (const std::exception&) {
        throw ParseError(o.scores + ":" + std::to_string(line_no) + ": bad number", line_no);
      }
    }
  } else {
    if (o.model.empty() || o.manifest.empty()) {
      throw InvalidInput("roc needs --scores, or both --model and --manifest");
    }
    const TrainedModel model = load_model(fs::path(o.model));
    const CategoryMap map = map_for_model(model, o.map_file);
    const ModelScorer scorer(model);
    for (const auto& e : read_manifest(o.manifest)) {
      const auto counts = count_transitions(parse_trace_file(e.path, map), map.size());
      ids.push_back(e.id);
      labels.push_back(e.label);
      scores.push_back(classify(model, scorer, counts).linear_predictor);
    }
  }
  const EvalReport report = report_from_scores(ids, labels, scores, o.fdr_levels);
  write_text(o.out, report_to_json(report));
  if (!o.csv.empty()) {
    std::ostringstream csv;
    write_roc_csv(report.roc, csv);
    write_text(o.csv, csv.str());
  }
  return kExitOk;
}

struct SynthOptions {
  std::string out;
  std::size_t per_class = 500;
  std::size_t length = 5000;
  double concentration = 200.0;
  std::uint64_t seed = 0;
  bool null_templates = false;
};

int run_synth(const SynthOptions& o) {
  const CategoryMap map = CategoryMap::builtin_cat1();
  SyntheticSpec spec = default_synthetic_spec(map.size());
  spec.traces_per_class = o.per_class;
  spec.instructions = o.length;
  spec.concentration = o.concentration;
  spec.seed = o.seed;
  if (o.null_templates) spec.malicious_template = spec.benign_template;
  const auto manifest = write_corpus(generate_synthetic(spec), o.out, map);
  std::cerr << "wrote " << 2 * o.per_class << " traces; manifest " << manifest.string() << '\n';
  return kExitOk;
}

int run_inspect(const std::string& model_path, const std::string& map_file) {
  const TrainedModel model = load_model(fs::path(model_path));
  std::optional<CategoryMap> map;
  try {
    map = map_for_model(model, map_file);
  } catch (const Error&) {
    map.reset();
  }
  const CategoryMap* m = map ? &*map : nullptr;
  const std::size_t c = model.num_categories;
  nlohmann::json active = nlohmann::json::array();
  for (auto s : model.active) active.push_back({{"index", s}, {"transition", feature_name(s, c, m)}});
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& tc : model.coefficients) {
    const std::string input = tc.term.s == tc.term.t
                                  ? feature_name(tc.term.s, c, m)
                                  : feature_name(tc.term.s, c, m) + " * " + feature_name(tc.term.t, c, m);
    std::string basis = "linear";
    if (tc.term.l > 1) {
      const double knot = model.knots.knots.at({tc.term.s, tc.term.t})[tc.term.l - 2];
      std::ostringstream k;
      k.precision(6);
      k << "hinge@" << knot;
      basis = k.str();
    }
    terms.push_back({{"s", tc.term.s}, {"t", tc.term.t}, {"l", tc.term.l}, {"input", input},
                     {"basis", basis}, {"value", tc.value}});
  }
  nlohmann::json j = {{"kind", std::string(to_string(model.kind))},
                      {"categorization", std::string(to_string(model.categorization))},
                      {"num_categories", c},
                      {"nu", model.nu},
                      {"active_predictors", active},
                      {"terms", terms},
                      {"intercept", model.intercept},
                      {"effective_intercept", model.effective_intercept()},
                      {"threshold", model.threshold},
                      {"prior_correction", model.prior_correction
                                               ? nlohmann::json{{"pi1", model.prior_correction->pi1},
                                                                {"sample_fraction", model.prior_correction->sample_fraction}}
                                               : nlohmann::json(nullptr)},
                      {"metadata", {{"n_train", model.metadata.n_train},
                                    {"lambda1", model.metadata.lambda1},
                                    {"lambda2", model.metadata.lambda2},
                                    {"lambda3", model.metadata.lambda3},
                                    {"rho3", model.metadata.rho3},
                                    {"warnings", model.metadata.warnings}}}};
  std::cout << j.dump(1) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Malware detection from dynamic instruction traces"};
  app.set_config("--config", "", "Read options from a TOML/INI file");
  app.require_subcommand(1);

  TrainOptions train_opts;
  std::string train_out = "model.json", train_report;
  auto* train_cmd = app.add_subcommand("train", "Fit a model from a labeled manifest");
  add_train_options(train_cmd, train_opts);
  train_cmd->add_option("-o,--out", train_out, "Model output path ('-' for stdout)");
  train_cmd->add_option("--report", train_report, "Optional training summary (JSON)");

  ClassifyOptions classify_opts;
  auto* classify_cmd = app.add_subcommand("classify", "Score traces with a trained model");
  classify_cmd->add_option("-m,--model", classify_opts.model, "Model file")->required();
  classify_cmd->add_option("--map", classify_opts.map_file, "Category map file");
  classify_cmd->add_option("traces", classify_opts.traces, "Trace files");
  classify_cmd->add_option("--manifest", classify_opts.manifest, "Manifest of traces to score");
  classify_cmd->add_flag("--gate", classify_opts.gate, "Exit with status 1 if any trace is malicious");
  classify_cmd->add_option("--tau", classify_opts.tau, "Override the model's probability threshold");

  MonitorOptions monitor_opts;
  auto* monitor_cmd = app.add_subcommand("monitor", "Stream a trace and report credible intervals");
  monitor_cmd->add_option("-m,--model", monitor_opts.model, "Model file")->required();
  monitor_cmd->add_option("--map", monitor_opts.map_file, "Category map file");
  monitor_cmd->add_option("trace", monitor_opts.trace, "Trace file, or '-' for stdin");
  monitor_cmd->add_option("--draws", monitor_opts.draws, "Posterior draws per checkpoint");
  monitor_cmd->add_option("--seed", monitor_opts.seed, "Draw seed");
  monitor_cmd->add_option("--cadence", monitor_opts.cadence, "Instructions between checkpoints");
  monitor_cmd->add_option("--ci-width", monitor_opts.ci_width, "Interval width below which to decide");
  monitor_cmd->add_option("--tau", monitor_opts.tau, "Probability threshold (default: the model's)");
  monitor_cmd->add_option("--m-max", monitor_opts.m_max, "Decide by tau alone after this many instructions");
  monitor_cmd->add_flag("--stop-on-decision", monitor_opts.stop_on_decision, "Exit after the first decision");
  monitor_cmd->add_flag("--serial", monitor_opts.serial, "Disable OpenMP kernels");

  CvOptions cv_opts;
  auto* cv_cmd = app.add_subcommand("cv", "k-fold cross-validated evaluation");
  add_train_options(cv_cmd, cv_opts.train);
  cv_cmd->add_option("--folds", cv_opts.folds, "Outer folds");
  cv_cmd->add_option("--fold-seed", cv_opts.fold_seed, "Seed for the outer fold assignment");
  cv_cmd->add_option("-o,--out", cv_opts.out, "Report path (JSON; default stdout)");
  cv_cmd->add_option("--roc-csv", cv_opts.roc_csv, "Also write ROC points as CSV");
  cv_cmd->add_option("--fdr-levels", cv_opts.fdr_levels, "FDR levels to report detection at");

  RocOptions roc_opts;
  auto* roc_cmd = app.add_subcommand("roc", "ROC, AUC and detection at fixed FDR");
  roc_cmd->add_option("--scores", roc_opts.scores, "CSV of id,label,score");
  roc_cmd->add_option("-m,--model", roc_opts.model, "Model used to score --manifest");
  roc_cmd->add_option("--manifest", roc_opts.manifest, "Labeled traces to score");
  roc_cmd->add_option("--map", roc_opts.map_file, "Category map file");
  roc_cmd->add_option("-o,--out", roc_opts.out, "Report path (JSON; default stdout)");
  roc_cmd->add_option("--csv", roc_opts.csv, "ROC points as CSV");
  roc_cmd->add_option("--fdr-levels", roc_opts.fdr_levels, "FDR levels to report detection at");

  SynthOptions synth_opts;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic two-class corpus");
  synth_cmd->add_option("-o,--out", synth_opts.out, "Output directory")->required();
  synth_cmd->add_option("--per-class", synth_opts.per_class, "Traces per class");
  synth_cmd->add_option("--length", synth_opts.length, "Instructions per trace");
  synth_cmd->add_option("--concentration", synth_opts.concentration, "Per-program Dirichlet concentration");
  synth_cmd->add_option("--seed", synth_opts.seed, "Generator seed");
  synth_cmd->add_flag("--null", synth_opts.null_templates, "Use the same template for both classes");

  std::string inspect_model, inspect_map;
  auto* inspect_cmd = app.add_subcommand("inspect-model", "Print a model's active terms");
  inspect_cmd->add_option("model", inspect_model, "Model file")->required();
  inspect_cmd->add_option("--map", inspect_map, "Category map file for transition names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (*train_cmd) return run_train(train_opts, train_out, train_report);
    if (*classify_cmd) return run_classify(classify_opts);
    if (*monitor_cmd) return run_monitor(monitor_opts);
    if (*cv_cmd) return run_cv(cv_opts);
    if (*roc_cmd) return run_roc(roc_opts);
    if (*synth_cmd) return run_synth(synth_opts);
    if (*inspect_cmd) return run_inspect(inspect_model, inspect_map);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
