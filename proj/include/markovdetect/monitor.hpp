#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "markovdetect/model.hpp"
#include "markovdetect/trace.hpp"

namespace markovdetect {

struct PosteriorSummary {
  std::uint64_t m = 0;
  double mean_prob = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t draws = 0;

  double width() const noexcept { return ci_high - ci_low; }
};

enum class Decision { Undecided, Benign, Malicious };
std::string_view to_string(Decision d);

struct DecisionRule {
  double tau = 0.5;
  double ci_width_max = 0.1;
  std::uint64_t cadence = 1000;
  /// Past this many instructions the decision falls back to tau alone.
  std::uint64_t m_max = 3'500'000;

  void validate() const;
};

/// Undecided while the interval is at least ci_width_max wide; otherwise
/// malicious iff mean_prob > tau.
Decision decide(const PosteriorSummary& s, const DecisionRule& rule);

/// Posterior mean and central 95% interval of Pr(B = 1) over `draws`
/// posterior draws of P, with the model itself held fixed.
PosteriorSummary posterior_prob(const TrainedModel& model, const ModelScorer& scorer,
                                const TransitionCounts& counts, std::size_t draws,
                                std::uint64_t seed);
PosteriorSummary posterior_prob(const TrainedModel& model, const TransitionCounts& counts,
                                std::size_t draws, std::uint64_t seed);

struct MonitorEvent {
  PosteriorSummary summary;
  Decision decision = Decision::Undecided;
  /// Decided by tau alone after m_max without a narrow interval.
  bool low_confidence = false;
};

/// Streaming detector for one live trace.
///
/// Checkpoints fall at every multiple of `cadence` instructions, and the
/// draws at a checkpoint use a seed derived from (seed, m). Summaries are
/// therefore identical however the trace is split into chunks.
class OnlineMonitor {
 public:
  OnlineMonitor(const TrainedModel& model, DecisionRule rule, std::size_t draws,
                std::uint64_t seed, bool parallel = true);

  /// Consume categories; returns one event per checkpoint crossed.
  std::vector<MonitorEvent> step(std::span<const Category> chunk);
  /// Summary at the current position (no-op if it is already a checkpoint
  /// that was reported). Useful at end of stream.
  std::optional<MonitorEvent> finish();

  const TransitionCounts& counts() const noexcept { return counts_; }
  /// First non-undecided decision, if any.
  std::optional<MonitorEvent> verdict() const { return verdict_; }

 private:
  MonitorEvent evaluate();

  const TrainedModel& model_;
  ModelScorer scorer_;
  DecisionRule rule_;
  std::size_t draws_;
  std::uint64_t seed_;
  bool parallel_;
  TransitionCounts counts_;
  std::optional<Category> prev_;
  std::uint64_t last_eval_ = 0;
  bool evaluated_ = false;
  std::optional<MonitorEvent> verdict_;
};

std::string to_json_line(const MonitorEvent& e);

}  // namespace markovdetect
