#include "markovdetect/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "markovdetect/errors.hpp"
#include "markovdetect/rng.hpp"

namespace markovdetect {

namespace {

using nlohmann::json;

void check_scores(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InvalidInput("scores and labels differ in length");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw InvalidInput("labels must be 0 or 1");
    if (std::isnan(scores[i])) throw InvalidInput("score " + std::to_string(i) + " is NaN");
  }
}

double accuracy_at_half(std::span<const double> eta, std::span<const int> labels) {
  std::size_t right = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) right += (eta[i] > 0.0) == (labels[i] == 1);
  return labels.empty() ? 0.0 : static_cast<double>(right) / static_cast<double>(labels.size());
}

json threshold_to_json(double t) { return std::isfinite(t) ? json(t) : json(nullptr); }
double threshold_from_json(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_scores(scores, labels);
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw InvalidInput("ROC needs both classes among the labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t a = 0; a < order.size();) {
    const double s = scores[order[a]];
    std::size_t b = a;
    while (b < order.size() && scores[order[b]] == s) {
      (labels[order[b]] == 1 ? tp : fp) += 1;
      ++b;
    }
    RocPoint pt{static_cast<double>(fp) / static_cast<double>(neg),
                static_cast<double>(tp) / static_cast<double>(pos), s};
    const RocPoint& prev = roc.points.back();
    roc.auc += (pt.fpr - prev.fpr) * (pt.tpr + prev.tpr) / 2.0;
    roc.points.push_back(pt);
    a = b;
  }
  return roc;
}

FdrOperatingPoint fdr_operating_point(std::span<const double> scores, std::span<const int> labels,
                                      double fdr) {
  if (!(fdr > 0.0 && fdr < 1.0)) throw InvalidParameter("fdr level must lie in (0, 1)");
  check_scores(scores, labels);
  std::vector<double> benign, malware;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? malware : benign).push_back(scores[i]);
  if (benign.empty()) throw InvalidInput("FDR operating point needs at least one benign score");
  std::sort(benign.begin(), benign.end(), std::greater<>());
  const auto allowed = static_cast<std::size_t>(
      std::floor(fdr * static_cast<double>(benign.size()) + 1e-9));

  FdrOperatingPoint op;
  op.threshold = allowed >= benign.size() ? -std::numeric_limits<double>::infinity()
                                          : benign[allowed];
  for (double s : benign) op.false_positives += s > op.threshold;
  std::size_t hits = 0;
  for (double s : malware) hits += s > op.threshold;
  op.detection_rate =
      malware.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(malware.size());
  return op;
}

double accuracy_at_fdr(std::span<const double> scores, std::span<const int> labels, double fdr) {
  return fdr_operating_point(scores, labels, fdr).detection_rate;
}

EvalReport report_from_scores(std::vector<std::string> ids, std::vector<int> labels,
                              std::vector<double> scores, std::vector<double> fdr_levels) {
  EvalReport r;
  r.n = labels.size();
  r.overall_accuracy = accuracy_at_half(scores, labels);
  r.roc = roc_curve(scores, labels);
  for (double f : fdr_levels) r.detection_at_fdr.push_back({f, accuracy_at_fdr(scores, labels, f)});
  r.ids = std::move(ids);
  r.labels = std::move(labels);
  r.scores = std::move(scores);
  return r;
}

EvalReport kfold_cv(const std::vector<LabeledCounts>& data, std::size_t k, const TrainConfig& cfg,
                    std::uint64_t fold_seed, std::vector<double> fdr_levels) {
  std::vector<const LabeledCounts*> kept;
  for (const auto& d : data) {
    if (d.counts.instructions() >= cfg.min_length) kept.push_back(&d);
  }
  std::vector<int> y(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) y[i] = kept[i]->label;
  validate_labels(y);
  const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  if (pos < k || y.size() - pos < k) {
    throw InvalidInput("each class needs at least " + std::to_string(k) +
                       " traces so that every stratified fold holds both classes (" +
                       std::to_string(pos) + " malicious, " + std::to_string(y.size() - pos) +
                       " benign after the length filter)");
  }
  const auto fold_of = stratified_fold_ids(y, k, fold_seed);

  std::vector<double> scores(kept.size());
  std::vector<FoldReport> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<LabeledCounts> train_set;
    std::vector<std::size_t> test_rows;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (fold_of[i] == f) {
        test_rows.push_back(i);
      } else {
        train_set.push_back(*kept[i]);
      }
    }
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = substream_seed(cfg.seed, f, 0xf01d);
    const TrainingResult tr = train(train_set, fold_cfg);
    const ModelScorer scorer(tr.model);
    std::vector<double> eta;
    std::vector<int> yt;
    for (std::size_t i : test_rows) {
      scores[i] = classify(tr.model, scorer, kept[i]->counts).linear_predictor;
      eta.push_back(scores[i]);
      yt.push_back(y[i]);
    }
    FoldReport& fr = folds[f];
    fr.fold = f;
    fr.n_test = test_rows.size();
    fr.n_malicious = static_cast<std::size_t>(std::count(yt.begin(), yt.end(), 1));
    fr.accuracy = accuracy_at_half(eta, yt);
    fr.lambda1 = tr.model.metadata.lambda1;
    fr.lambda2 = tr.model.metadata.lambda2;
    fr.lambda3 = tr.model.metadata.lambda3;
    fr.rho3 = tr.model.metadata.rho3;
    fr.active_predictors = tr.model.active.size();
    fr.terms = tr.model.coefficients.size();
  }

  std::vector<std::string> ids(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) ids[i] = kept[i]->id;
  EvalReport r = report_from_scores(std::move(ids), std::move(y), std::move(scores),
                                    std::move(fdr_levels));
  r.model_kind = std::string(to_string(cfg.kind));
  r.folds = k;
  r.seed = fold_seed;
  r.per_fold = std::move(folds);
  return r;
}

std::string report_to_json(const EvalReport& r) {
  json roc = json::array();
  for (const auto& p : r.roc.points) roc.push_back(json::array({p.fpr, p.tpr, threshold_to_json(p.threshold)}));
  json fdr = json::array();
  for (const auto& d : r.detection_at_fdr) fdr.push_back({{"fdr", d.fdr}, {"detection", d.detection}});
  json folds = json::array();
  for (const auto& f : r.per_fold) {
    folds.push_back({{"fold", f.fold},
                     {"n_test", f.n_test},
                     {"n_malicious", f.n_malicious},
                     {"accuracy", f.accuracy},
                     {"lambda1", f.lambda1},
                     {"lambda2", f.lambda2},
                     {"lambda3", f.lambda3},
                     {"rho3", f.rho3},
                     {"active_predictors", f.active_predictors},
                     {"terms", f.terms}});
  }
  json oof = json::array();
  for (std::size_t i = 0; i < r.scores.size(); ++i) {
    oof.push_back({{"id", r.ids[i]}, {"label", r.labels[i]}, {"score", r.scores[i]}});
  }
  json j = {{"schema_version", kReportSchemaVersion},
            {"model_kind", r.model_kind},
            {"folds", r.folds},
            {"seed", r.seed},
            {"n", r.n},
            {"overall_accuracy", r.overall_accuracy},
            {"detection_at_fdr", fdr},
            {"auc", r.roc.auc},
            {"roc", roc},
            {"per_fold", folds},
            {"scores", oof}};
  return j.dump(1) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed report: ") + e.what(), e.byte);
  }
  try {
    if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
      throw VersionError("unsupported report schema_version");
    }
    EvalReport r;
    r.model_kind = j.at("model_kind").get<std::string>();
    r.folds = j.at("folds").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.n = j.at("n").get<std::size_t>();
    r.overall_accuracy = j.at("overall_accuracy").get<double>();
    for (const auto& d : j.at("detection_at_fdr")) {
      r.detection_at_fdr.push_back({d.at("fdr").get<double>(), d.at("detection").get<double>()});
    }
    r.roc.auc = j.at("auc").get<double>();
    for (const auto& p : j.at("roc")) {
      r.roc.points.push_back({p.at(0).get<double>(), p.at(1).get<double>(), threshold_from_json(p.at(2))});
    }
    for (const auto& f : j.at("per_fold")) {
      FoldReport fr;
      fr.fold = f.at("fold").get<std::size_t>();
      fr.n_test = f.at("n_test").get<std::size_t>();
      fr.n_malicious = f.at("n_malicious").get<std::size_t>();
      fr.accuracy = f.at("accuracy").get<double>();
      fr.lambda1 = f.at("lambda1").get<double>();
      fr.lambda2 = f.at("lambda2").get<double>();
      fr.lambda3 = f.at("lambda3").get<double>();
      fr.rho3 = f.at("rho3").get<double>();
      fr.active_predictors = f.at("active_predictors").get<std::size_t>();
      fr.terms = f.at("terms").get<std::size_t>();
      r.per_fold.push_back(fr);
    }
    for (const auto& s : j.at("scores")) {
      r.ids.push_back(s.at("id").get<std::string>());
      r.labels.push_back(s.at("label").get<int>());
      r.scores.push_back(s.at("score").get<double>());
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("report has missing or mistyped fields: ") + e.what(), 0);
  }
}

void write_roc_csv(const RocCurve& roc, std::ostream& out) {
  out << "fpr,tpr,threshold\n";
  out.precision(17);
  for (const auto& p : roc.points) {
    out << p.fpr << ',' << p.tpr << ',';
    if (std::isfinite(p.threshold)) out << p.threshold;
    out << '\n';
  }
}

}  // namespace markovdetect
