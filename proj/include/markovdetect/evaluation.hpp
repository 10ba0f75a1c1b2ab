#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "markovdetect/pipeline.hpp"

namespace markovdetect {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  /// Points at or above this score are called positive; +inf for (0, 0).
  double threshold = 0.0;

  bool operator==(const RocPoint&) const = default;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;

  bool operator==(const RocCurve&) const = default;
};

/// Threshold sweep over the distinct scores, highest first. Equal scores
/// form one step, so ties contribute a diagonal segment; AUC is the
/// trapezoidal area. Throws InvalidInput unless both classes are present.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

struct FdrOperatingPoint {
  /// Malicious iff score > threshold; -inf when every benign may be flagged.
  double threshold = 0.0;
  std::size_t false_positives = 0;
  double detection_rate = 0.0;
};

/// Lowest cut that flags at most floor(fdr * n_benign) benign programs:
/// the cut sits on the (k + 1)-th largest benign score.
FdrOperatingPoint fdr_operating_point(std::span<const double> scores, std::span<const int> labels,
                                      double fdr);
double accuracy_at_fdr(std::span<const double> scores, std::span<const int> labels, double fdr);

struct FoldReport {
  std::size_t fold = 0;
  std::size_t n_test = 0;
  std::size_t n_malicious = 0;
  double accuracy = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  double rho3 = 0.0;
  std::size_t active_predictors = 0;
  std::size_t terms = 0;

  bool operator==(const FoldReport&) const = default;
};

struct FdrDetection {
  double fdr = 0.0;
  double detection = 0.0;

  bool operator==(const FdrDetection&) const = default;
};

inline constexpr int kReportSchemaVersion = 1;

/// Pooled out-of-fold evaluation. Accuracy is measured at Pr = 0.5;
/// detection-at-FDR thresholds are placed on the pooled out-of-fold scores.
struct EvalReport {
  std::string model_kind;
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  double overall_accuracy = 0.0;
  std::vector<FdrDetection> detection_at_fdr;
  RocCurve roc;
  std::vector<FoldReport> per_fold;
  /// Out-of-fold linear predictor per evaluated trace, in input order.
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<double> scores;

  bool operator==(const EvalReport&) const = default;
};

/// Stratified k-fold evaluation that reruns the full training procedure on
/// each training split. Traces below the length filter are dropped from the
/// evaluation entirely.
EvalReport kfold_cv(const std::vector<LabeledCounts>& data, std::size_t k, const TrainConfig& cfg,
                    std::uint64_t fold_seed, std::vector<double> fdr_levels = {0.01, 0.001});

/// Report from precomputed scores (used by `roc`).
EvalReport report_from_scores(std::vector<std::string> ids, std::vector<int> labels,
                              std::vector<double> scores, std::vector<double> fdr_levels);

std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& text);
void write_roc_csv(const RocCurve& roc, std::ostream& out);

}  // namespace markovdetect
