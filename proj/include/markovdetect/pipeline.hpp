#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "markovdetect/cross_validation.hpp"
#include "markovdetect/model.hpp"
#include "markovdetect/trace.hpp"

namespace markovdetect {

struct TrainConfig {
  ModelKind kind = ModelKind::InteractionSpline;
  Categorization categorization = Categorization::Cat1;
  std::size_t knots = kDefaultKnots;
  double nu = kDefaultNu;
  /// Mixing weight for the screening and spline steps.
  double rho_screen = 0.5;
  /// Candidate mixing weights for the adaptive step.
  std::vector<double> rho3_grid = {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5,
                                   0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95};
  std::size_t n_lambda = 100;
  double lambda_min_ratio = 1e-4;
  std::size_t max_active = kDefaultMaxActive;
  std::size_t inner_folds = 10;
  std::uint64_t seed = 0;
  std::uint64_t min_length = kMinTrainingLength;
  CvCriterion criterion = CvCriterion::Deviance;
  /// Benign false-positive target for the threshold, placed on the inner-CV
  /// scores of the final step.
  double fdr_target = 0.001;
  /// Deployment malware rate; when set the intercept is prior-corrected.
  std::optional<double> pi1;
  /// Fixed per-step penalties that bypass tuning.
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<double> lambda3;
  std::optional<double> rho3;
  double tolerance = 1e-7;
  bool parallel = true;

  void validate() const;
};

struct LabeledCounts {
  TransitionCounts counts;
  int label = 0;
  std::string id;
};

struct TrainingReport {
  std::vector<std::uint32_t> step1_active;
  /// Design terms entering step 2 and nonzero after it.
  std::size_t step2_candidates = 0;
  std::vector<Term> step2_terms;
  std::vector<Term> step3_terms;
  std::size_t filtered_short = 0;
  std::vector<std::string> warnings;
};

struct TrainingResult {
  TrainedModel model;
  TrainingReport report;
};

/// Screening, spline and adaptive steps of the relaxed adaptive elastic net.
/// Standardization, knots, tuning and the threshold all come from `data`
/// alone. Traces shorter than `cfg.min_length` are excluded.
TrainingResult train(const std::vector<LabeledCounts>& data, const TrainConfig& cfg);

/// beta0 - log((1 - pi1) / pi1 * b_bar / (1 - b_bar)); both rates must be in (0, 1).
double prior_correct(double beta0, double pi1, double b_bar);

/// Attach a correction for deployment rate `pi1`. The stored probability
/// threshold moves with the intercept so every decision is unchanged.
TrainedModel apply_prior_correction(TrainedModel model, double pi1);

/// Logit-feature vector of P-hat (posterior mean) for one trace.
FeatureVector trace_features(const TransitionCounts& counts, double nu);

struct Classification {
  double probability = 0.0;
  double linear_predictor = 0.0;
  bool malicious = false;
};

Classification classify(const TrainedModel& model, const ModelScorer& scorer,
                        const TransitionCounts& counts);
Classification classify(const TrainedModel& model, const TransitionCounts& counts);
/// Also rejects a trace categorized under a different scheme.
Classification classify(const TrainedModel& model, const TransitionCounts& counts,
                        Categorization categorization);

}  // namespace markovdetect
