#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "markovdetect/category_map.hpp"
#include "markovdetect/features.hpp"

namespace markovdetect {

inline constexpr int kModelSchemaVersion = 1;

enum class ModelKind { Linear, InteractionSpline };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);

struct TermCoefficient {
  Term term;
  double value = 0.0;

  bool operator==(const TermCoefficient&) const = default;
};

/// Intercept shift for a deployment malware rate pi1 that differs from the
/// training-sample rate.
struct PriorCorrection {
  double pi1 = 0.0;
  double sample_fraction = 0.0;
  double corrected_intercept = 0.0;

  bool operator==(const PriorCorrection&) const = default;
};

struct ModelMetadata {
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_filtered = 0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  double rho3 = 0.0;
  std::size_t inner_folds = 0;
  double fdr_target = 0.0;
  /// Malware fraction of the filtered training sample.
  double sample_fraction = 0.0;
  std::string criterion;
  std::vector<std::string> warnings;

  bool operator==(const ModelMetadata&) const = default;
};

/// Everything needed to score a trace. Immutable once trained.
///
/// Invariants (checked by validate()): every coefficient term is in `terms`;
/// every term's predictors are in `active`; `knots` holds exactly the pairs
/// that carry a coefficient; a prior correction, when present, matches
/// `intercept` exactly.
struct TrainedModel {
  Categorization categorization = Categorization::Cat1;
  std::size_t num_categories = 8;
  double nu = 0.1;
  ModelKind kind = ModelKind::InteractionSpline;
  Standardizer standardizer;
  std::vector<std::uint32_t> active;
  SplineKnots knots;
  TermIndex terms;
  std::vector<TermCoefficient> coefficients;
  double intercept = 0.0;
  std::optional<PriorCorrection> prior_correction;
  /// Probability cut: malicious iff Pr(B = 1) > threshold.
  double threshold = 0.5;
  ModelMetadata metadata;

  double effective_intercept() const {
    return prior_correction ? prior_correction->corrected_intercept : intercept;
  }
  void validate() const;

  bool operator==(const TrainedModel&) const = default;
};

/// Compiled scoring path: only the features the coefficients touch are
/// standardized and expanded.
class ModelScorer {
 public:
  explicit ModelScorer(const TrainedModel& model);

  /// Feature indices (row-major into the c x c logit vector) that affect the
  /// score, ascending.
  const std::vector<std::uint32_t>& features() const noexcept { return features_; }

  /// `raw[i]` is the unstandardized logit of feature features()[i].
  double linear_selected(std::span<const double> raw) const;
  /// Full length-c^2 logit vector.
  double linear(std::span<const double> logits) const;

  double intercept() const noexcept { return intercept_; }

 private:
  struct Block {
    std::size_t a;  // positions into features_
    std::size_t b;
    std::vector<double> knots;
    std::vector<double> coef;  // size knots + 1, zeros allowed
  };

  std::vector<std::uint32_t> features_;
  std::vector<double> means_;
  std::vector<double> sds_;
  std::vector<char> degenerate_;
  std::vector<Block> blocks_;
  double intercept_;
};

void save_model(const TrainedModel& model, std::ostream& out);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
/// Throws ParseError (with byte position) on malformed input and
/// VersionError on an unknown format or schema version.
TrainedModel load_model(std::istream& in);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace markovdetect
