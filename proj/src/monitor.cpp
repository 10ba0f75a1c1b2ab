#include "markovdetect/monitor.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "markovdetect/errors.hpp"
#include "markovdetect/features.hpp"
#include "markovdetect/kernels.hpp"
#include "markovdetect/rng.hpp"

namespace markovdetect {

namespace {

PosteriorSummary summarize(std::vector<double> probs, std::uint64_t m) {
  PosteriorSummary s;
  s.m = m;
  s.draws = probs.size();
  double sum = 0.0;
  for (double p : probs) sum += p;
  s.mean_prob = sum / static_cast<double>(probs.size());
  std::sort(probs.begin(), probs.end());
  s.ci_low = quantile_sorted(probs, 0.025);
  s.ci_high = quantile_sorted(probs, 0.975);
  return s;
}

}  // namespace

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::Malicious: return "malicious";
    case Decision::Benign: return "benign";
    case Decision::Undecided: return "undecided";
  }
  return "undecided";
}

void DecisionRule::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidParameter("tau must lie in (0, 1)");
  if (!(ci_width_max > 0.0)) throw InvalidParameter("ci_width_max must be > 0");
  if (cadence == 0) throw InvalidParameter("cadence must be >= 1");
}

Decision decide(const PosteriorSummary& s, const DecisionRule& rule) {
  if (s.width() >= rule.ci_width_max) return Decision::Undecided;
  return s.mean_prob > rule.tau ? Decision::Malicious : Decision::Benign;
}

PosteriorSummary posterior_prob(const TrainedModel& model, const ModelScorer& scorer,
                                const TransitionCounts& counts, std::size_t draws,
                                std::uint64_t seed) {
  if (draws < 2) throw InvalidParameter("posterior summaries need at least 2 draws");
  if (counts.num_categories() != model.num_categories) {
    throw InvalidInput("trace category count does not match the model");
  }
  if (!(model.nu > 0.0)) throw InvalidParameter("nu must be > 0");
  return summarize(kernels::draw_probabilities(scorer, counts, model.nu, draws, seed),
                   counts.instructions());
}

PosteriorSummary posterior_prob(const TrainedModel& model, const TransitionCounts& counts,
                                std::size_t draws, std::uint64_t seed) {
  return posterior_prob(model, ModelScorer(model), counts, draws, seed);
}

OnlineMonitor::OnlineMonitor(const TrainedModel& model, DecisionRule rule, std::size_t draws,
                             std::uint64_t seed, bool parallel)
    : model_(model), scorer_(model), rule_(rule), draws_(draws), seed_(seed),
      parallel_(parallel), counts_(model.num_categories) {
  rule_.validate();
  if (draws_ < 2) throw InvalidParameter("posterior summaries need at least 2 draws");
}

MonitorEvent OnlineMonitor::evaluate() {
  const std::uint64_t m = counts_.instructions();
  const std::uint64_t seed = substream_seed(seed_, m);
  auto probs = parallel_ ? kernels::draw_probabilities(scorer_, counts_, model_.nu, draws_, seed)
                         : kernels::draw_probabilities_serial(scorer_, counts_, model_.nu, draws_, seed);
  MonitorEvent e;
  e.summary = summarize(std::move(probs), m);
  e.decision = decide(e.summary, rule_);
  if (e.decision == Decision::Undecided && m >= rule_.m_max) {
    e.decision = e.summary.mean_prob > rule_.tau ? Decision::Malicious : Decision::Benign;
    e.low_confidence = true;
  }
  last_eval_ = m;
  evaluated_ = true;
  if (!verdict_ && e.decision != Decision::Undecided) verdict_ = e;
  return e;
}

std::vector<MonitorEvent> OnlineMonitor::step(std::span<const Category> chunk) {
  const std::size_t c = model_.num_categories;
  for (Category k : chunk) {
    if (k >= c) throw InvalidInput("category " + std::to_string(k) + " out of range");
  }
  std::vector<MonitorEvent> events;
  for (Category k : chunk) {
    counts_.add(k, prev_);
    prev_ = k;
    if (counts_.instructions() % rule_.cadence == 0) events.push_back(evaluate());
  }
  return events;
}

std::optional<MonitorEvent> OnlineMonitor::finish() {
  if (evaluated_ && last_eval_ == counts_.instructions()) return std::nullopt;
  return evaluate();
}

std::string to_json_line(const MonitorEvent& e) {
  nlohmann::json j = {{"m", e.summary.m},
                      {"mean", e.summary.mean_prob},
                      {"ci_low", e.summary.ci_low},
                      {"ci_high", e.summary.ci_high},
                      {"draws", e.summary.draws},
                      {"decision", std::string(to_string(e.decision))},
                      {"low_confidence", e.low_confidence}};
  return j.dump();
}

}  // namespace markovdetect
