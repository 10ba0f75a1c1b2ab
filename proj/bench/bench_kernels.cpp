#include <benchmark/benchmark.h>

#include "markovdetect/features.hpp"
#include "markovdetect/kernels.hpp"
#include "markovdetect/synthetic.hpp"

namespace md = markovdetect;

namespace {

struct Fixture {
  std::vector<md::InstructionSequence> traces;
  std::vector<md::TransitionCounts> counts;
  md::Matrix x_std;
  md::SplineKnots knots;
  md::TermIndex terms;
  std::vector<std::uint32_t> active;
  md::TrainedModel model;

  Fixture() {
    auto spec = md::default_synthetic_spec(8);
    spec.traces_per_class = 200;
    spec.instructions = 5000;
    for (auto& p : md::generate_synthetic(spec)) traces.push_back(std::move(p.sequence));
    counts = md::kernels::count_batch_serial(traces, 8);
    const auto raw = md::kernels::logit_feature_matrix_serial(counts, 0.1);
    const auto standardizer = md::Standardizer::fit(raw);
    x_std = standardizer.apply(raw);
    for (std::uint32_t s = 0; s < 24; ++s) active.push_back(s);
    knots = md::fit_knots(x_std, active, 5, true);
    terms = md::TermIndex::full(knots);

    model.standardizer = standardizer;
    model.active = {9, 27};
    model.knots.knots[{9, 9}] = {-0.5, 0.0, 0.5};
    model.knots.knots[{9, 27}] = {0.0};
    model.knots.knots[{27, 27}] = {};
    model.terms = md::TermIndex::full(model.knots);
    model.coefficients = {{{9, 9, 1}, 0.8}, {{9, 9, 3}, -0.4}, {{9, 27, 2}, 0.3}, {{27, 27, 1}, -1.1}};
    model.intercept = 0.2;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_CountBatch(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) {
    auto out = state.range(0) ? md::kernels::count_batch(f.traces, 8)
                              : md::kernels::count_batch_serial(f.traces, 8);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_LogitFeatures(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) {
    auto out = state.range(0) ? md::kernels::logit_feature_matrix(f.counts, 0.1)
                              : md::kernels::logit_feature_matrix_serial(f.counts, 0.1);
    benchmark::DoNotOptimize(out.data().data());
  }
}

void BM_DesignMatrix(benchmark::State& state) {
  const auto& f = fixture();
  const md::DesignPlan plan(f.active, f.knots, f.terms);
  for (auto _ : state) {
    auto out = state.range(0) ? md::kernels::design_matrix(f.x_std, plan)
                              : md::kernels::design_matrix_serial(f.x_std, plan);
    benchmark::DoNotOptimize(out.data().data());
  }
}

void BM_PosteriorDraws(benchmark::State& state) {
  const auto& f = fixture();
  const md::ModelScorer scorer(f.model);
  for (auto _ : state) {
    auto out = state.range(0) ? md::kernels::draw_probabilities(scorer, f.counts[0], 0.1, 1000, 7)
                              : md::kernels::draw_probabilities_serial(scorer, f.counts[0], 0.1, 1000, 7);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

// Arg(0) = serial reference, Arg(1) = OpenMP kernel.
BENCHMARK(BM_CountBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LogitFeatures)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DesignMatrix)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PosteriorDraws)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
