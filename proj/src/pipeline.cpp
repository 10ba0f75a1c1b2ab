#include "markovdetect/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "markovdetect/dirichlet.hpp"
#include "markovdetect/errors.hpp"
#include "markovdetect/evaluation.hpp"
#include "markovdetect/kernels.hpp"
#include "markovdetect/rng.hpp"

namespace markovdetect {

namespace {

std::string criterion_name(CvCriterion c) {
  switch (c) {
    case CvCriterion::Deviance: return "deviance";
    case CvCriterion::Misclassification: return "misclassification";
    case CvCriterion::DetectionAtFdr: return "detection-at-fdr";
  }
  return "deviance";
}

struct StepFit {
  PathPoint point;
  double lambda = 0.0;
  double rho = 0.0;
  bool single_class_fold = false;
  /// Inner-CV scores at the chosen penalty; empty when lambda was fixed.
  std::vector<double> out_of_fold;
};

// Tunes lambda (and rho over `rhos`) by inner CV unless fixed, then refits
// the warm path on all rows down to the chosen lambda.
StepFit fit_step(const Matrix& x, std::span<const int> y, PenaltyConfig cfg,
                 const std::vector<double>& rhos, std::optional<double> fixed_lambda,
                 const TrainConfig& tc, std::uint64_t step) {
  StepFit out;
  double lambda = 0.0;
  if (fixed_lambda) {
    lambda = *fixed_lambda;
    cfg.rho = rhos.front();
  } else {
    CvConfig cv;
    cv.folds = tc.inner_folds;
    cv.seed = substream_seed(tc.seed, step);
    cv.criterion = tc.criterion;
    cv.fdr_level = tc.fdr_target;
    cv.rho_grid = rhos;
    cv.parallel = tc.parallel;
    const CvResult tuned = cv_tune(x, y, cfg, cv);
    lambda = tuned.lambda;
    cfg.rho = tuned.rho;
    out.single_class_fold = tuned.single_class_fold;
    out.out_of_fold = tuned.out_of_fold;
  }
  const FitResult fit = fit_to_lambda(x, y, cfg, lambda);
  if (fit.path.empty()) {
    throw TrainingError("active-set cap of " + std::to_string(cfg.max_active) +
                        " reached at the first lambda of step " + std::to_string(step));
  }
  out.point = fit.path.back();
  out.lambda = out.point.lambda;
  out.rho = cfg.rho;
  return out;
}

PenaltyConfig penalty_from(const TrainConfig& tc) {
  PenaltyConfig p;
  p.n_lambda = tc.n_lambda;
  p.lambda_min_ratio = tc.lambda_min_ratio;
  p.max_active = tc.max_active;
  p.tolerance = tc.tolerance;
  return p;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(nu > 0.0) || !std::isfinite(nu)) throw InvalidParameter("nu must be finite and > 0");
  if (!(rho_screen >= 0.0 && rho_screen <= 1.0)) throw InvalidParameter("rho must lie in [0, 1]");
  for (double r : rho3_grid) {
    if (!(r >= 0.0 && r <= 1.0)) throw InvalidParameter("rho3 grid values must lie in [0, 1]");
  }
  if (rho3_grid.empty() && !rho3) throw InvalidParameter("rho3 grid is empty");
  if (rho3 && !(*rho3 >= 0.0 && *rho3 <= 1.0)) throw InvalidParameter("rho3 must lie in [0, 1]");
  if (n_lambda == 0) throw InvalidParameter("n_lambda must be >= 1");
  if (inner_folds < 2) throw InvalidParameter("inner CV needs at least 2 folds");
  if (max_active == 0) throw InvalidParameter("max_active must be >= 1");
  if (!(fdr_target > 0.0 && fdr_target < 1.0)) throw InvalidParameter("fdr target must lie in (0, 1)");
  if (pi1 && !(*pi1 > 0.0 && *pi1 < 1.0)) throw InvalidParameter("pi1 must lie in (0, 1)");
  for (auto l : {lambda1, lambda2, lambda3}) {
    if (l && !(*l > 0.0)) throw InvalidParameter("fixed lambdas must be > 0");
  }
}

FeatureVector trace_features(const TransitionCounts& counts, double nu) {
  return logit_features(posterior_mean(counts, nu));
}

TrainingResult train(const std::vector<LabeledCounts>& data, const TrainConfig& cfg) {
  cfg.validate();
  TrainingResult result;
  TrainingReport& report = result.report;
  TrainedModel& model = result.model;

  std::vector<TransitionCounts> counts;
  std::vector<int> y;
  for (const auto& d : data) {
    if (d.label != 0 && d.label != 1) {
      throw InvalidInput("trace '" + d.id + "' has label " + std::to_string(d.label));
    }
    if (d.counts.instructions() < cfg.min_length) {
      ++report.filtered_short;
      continue;
    }
    if (!counts.empty() && d.counts.num_categories() != counts.front().num_categories()) {
      throw InvalidInput("trace '" + d.id + "' uses a different category count");
    }
    counts.push_back(d.counts);
    y.push_back(d.label);
  }
  const auto positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  if (positives == 0 || positives == y.size()) {
    throw TrainingError("training data needs both classes after filtering traces shorter than " +
                        std::to_string(cfg.min_length) + " instructions (" +
                        std::to_string(y.size()) + " kept, " + std::to_string(positives) +
                        " malicious)");
  }
  const std::size_t c = counts.front().num_categories();

  const Matrix raw = cfg.parallel ? kernels::logit_feature_matrix(counts, cfg.nu)
                                  : kernels::logit_feature_matrix_serial(counts, cfg.nu);
  model.standardizer = Standardizer::fit(raw);
  const Matrix x_std = model.standardizer.apply(raw);

  model.categorization = cfg.categorization;
  model.num_categories = c;
  model.nu = cfg.nu;
  model.kind = cfg.kind;
  model.knots.budget = cfg.kind == ModelKind::Linear ? 0 : cfg.knots;
  auto& meta = model.metadata;
  meta.seed = cfg.seed;
  meta.n_train = y.size();
  meta.n_filtered = report.filtered_short;
  meta.inner_folds = cfg.inner_folds;
  meta.fdr_target = cfg.fdr_target;
  meta.criterion = criterion_name(cfg.criterion);
  meta.sample_fraction = static_cast<double>(positives) / static_cast<double>(y.size());

  auto warn = [&](std::string w) { report.warnings.push_back(std::move(w)); };

  // Step 1: screen predictors with a linear elastic net.
  const PenaltyConfig base = penalty_from(cfg);
  const StepFit s1 = fit_step(x_std, y, base, {cfg.rho_screen}, cfg.lambda1, cfg, 1);
  meta.lambda1 = s1.lambda;
  for (std::size_t k = 0; k < s1.point.coefficients.index.size(); ++k) {
    report.step1_active.push_back(static_cast<std::uint32_t>(s1.point.coefficients.index[k]));
  }
  model.active = report.step1_active;
  if (s1.single_class_fold) warn("step 1: an inner training fold held a single class");

  double intercept = s1.point.intercept;
  std::vector<double> calibration = s1.out_of_fold;
  std::vector<TermCoefficient> final_terms;
  if (model.active.empty()) {
    warn("step 1 selected no predictors; the model is intercept-only");
  } else {
    // Step 2: spline (or linear) terms over the active predictors.
    const SplineKnots all_knots =
        fit_knots(x_std, model.active, model.knots.budget, cfg.kind == ModelKind::InteractionSpline);
    const TermIndex all_terms = TermIndex::full(all_knots);
    const DesignPlan plan(model.active, all_knots, all_terms);
    const Matrix d2 = cfg.parallel ? kernels::design_matrix(x_std, plan)
                                   : kernels::design_matrix_serial(x_std, plan);
    report.step2_candidates = all_terms.size();
    const StepFit s2 = fit_step(d2, y, base, {cfg.rho_screen}, cfg.lambda2, cfg, 2);
    meta.lambda2 = s2.lambda;
    if (s2.single_class_fold) warn("step 2: an inner training fold held a single class");
    intercept = s2.point.intercept;
    calibration = s2.out_of_fold;

    const auto& nz = s2.point.coefficients;
    for (std::size_t col : nz.index) report.step2_terms.push_back(all_terms[col]);
    if (nz.index.empty()) {
      warn("step 2 kept no terms; the model is intercept-only");
    } else {
      // Step 3: adaptive elastic net on the surviving terms.
      const Matrix d3 = select_cols(d2, nz.index);
      PenaltyConfig adaptive = base;
      adaptive.penalty_weights.resize(nz.value.size());
      for (std::size_t k = 0; k < nz.value.size(); ++k) {
        adaptive.penalty_weights[k] = 1.0 / std::abs(nz.value[k]);
      }
      const std::vector<double> rhos = cfg.rho3 ? std::vector<double>{*cfg.rho3} : cfg.rho3_grid;
      const StepFit s3 = fit_step(d3, y, adaptive, rhos, cfg.lambda3, cfg, 3);
      meta.lambda3 = s3.lambda;
      meta.rho3 = s3.rho;
      if (s3.single_class_fold) warn("step 3: an inner training fold held a single class");
      intercept = s3.point.intercept;
      calibration = s3.out_of_fold;
      const auto& fin = s3.point.coefficients;
      for (std::size_t k = 0; k < fin.index.size(); ++k) {
        const Term term = all_terms[nz.index[fin.index[k]]];
        report.step3_terms.push_back(term);
        final_terms.push_back({term, fin.value[k]});
      }
      if (final_terms.empty()) warn("step 3 kept no terms; the model is intercept-only");
    }
    std::sort(final_terms.begin(), final_terms.end(),
              [](const TermCoefficient& a, const TermCoefficient& b) { return a.term < b.term; });
    for (const auto& tcoef : final_terms) {
      const PredictorPair pair{tcoef.term.s, tcoef.term.t};
      model.knots.knots.emplace(pair, all_knots.knots.at(pair));
    }
  }
  model.terms = TermIndex::full(model.knots);
  model.coefficients = std::move(final_terms);
  model.intercept = intercept;
  meta.warnings = report.warnings;

  // Threshold at the false-positive target on the last step's inner-CV
  // scores; in-sample scores would understate the benign tail. A fixed
  // lambda leaves no CV scores, and an intercept-only model scores every
  // trace alike, so in-sample scores stand in for both.
  if (calibration.empty() || model.coefficients.empty()) {
    const ModelScorer scorer(model);
    calibration.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) calibration[i] = scorer.linear(raw.row(i));
  }
  const auto op = fdr_operating_point(calibration, y, cfg.fdr_target);
  model.threshold = std::isfinite(op.threshold) ? inv_logit(op.threshold) : 0.0;

  if (cfg.pi1) model = apply_prior_correction(std::move(model), *cfg.pi1);
  model.validate();
  return result;
}

double prior_correct(double beta0, double pi1, double b_bar) {
  if (!(pi1 > 0.0 && pi1 < 1.0)) throw InvalidParameter("pi1 must lie strictly inside (0, 1)");
  if (!(b_bar > 0.0 && b_bar < 1.0)) {
    throw InvalidParameter("sample malware fraction must lie strictly inside (0, 1)");
  }
  return beta0 - std::log((1.0 - pi1) / pi1 * b_bar / (1.0 - b_bar));
}

TrainedModel apply_prior_correction(TrainedModel model, double pi1) {
  const double b_bar = model.metadata.sample_fraction;
  const double before = model.effective_intercept();
  const double corrected = prior_correct(model.intercept, pi1, b_bar);
  model.prior_correction = PriorCorrection{pi1, b_bar, corrected};
  if (model.threshold > 0.0 && model.threshold < 1.0) {
    model.threshold = inv_logit(logit(model.threshold) + (corrected - before));
  }
  return model;
}

Classification classify(const TrainedModel& model, const ModelScorer& scorer,
                        const TransitionCounts& counts) {
  if (counts.num_categories() != model.num_categories) {
    throw InvalidInput("trace has " + std::to_string(counts.num_categories()) +
                       " categories but the model expects " +
                       std::to_string(model.num_categories));
  }
  Classification out;
  out.linear_predictor = scorer.linear(trace_features(counts, model.nu));
  out.probability = inv_logit(out.linear_predictor);
  out.malicious = out.probability > model.threshold;
  return out;
}

Classification classify(const TrainedModel& model, const TransitionCounts& counts) {
  return classify(model, ModelScorer(model), counts);
}

Classification classify(const TrainedModel& model, const TransitionCounts& counts,
                        Categorization categorization) {
  if (categorization != model.categorization) {
    throw InvalidInput("trace categorization " + std::string(to_string(categorization)) +
                       " does not match the model's " +
                       std::string(to_string(model.categorization)));
  }
  return classify(model, counts);
}

}  // namespace markovdetect
