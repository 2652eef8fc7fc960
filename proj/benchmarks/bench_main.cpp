#include <benchmark/benchmark.h>

#include "cdml/bootstrap.hpp"
#include "cdml/estimator.hpp"
#include "cdml/inference.hpp"
#include "cdml/simgen.hpp"

using namespace cdml;

namespace {

SimResult design(std::size_t clusters, std::size_t n) {
  SimConfig cfg;
  cfg.clusters = clusters;
  cfg.n_min = cfg.n_max = n;
  cfg.seed = 1;
  return generate(cfg);
}

void BM_CrossfitBoosted(benchmark::State& state) {
  const SimResult sim = design(static_cast<std::size_t>(state.range(0)), 100);
  const FoldPlan plan = make_folds(sim.data, 5, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(crossfit_outcome(sim.data, LearnerSpec::boosted(), plan));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(sim.data.row_count()));
}
BENCHMARK(BM_CrossfitBoosted)->Arg(20)->Arg(40)->Unit(benchmark::kMillisecond);

void BM_CrossfitRidgeCv(benchmark::State& state) {
  const SimResult sim = design(40, 100);
  const FoldPlan plan = make_folds(sim.data, 5, 1);
  for (auto _ : state) benchmark::DoNotOptimize(crossfit_outcome(sim.data, LearnerSpec::ridge(), plan));
}
BENCHMARK(BM_CrossfitRidgeCv)->Unit(benchmark::kMillisecond);

void BM_FitDmlLinear(benchmark::State& state) {
  const SimResult sim = design(40, 100);
  for (auto _ : state) {
    const DmlFit fit = fit_dml(sim.data, PolySpec::cubic(), LearnerSpec::linear(), 5, 1);
    benchmark::DoNotOptimize(sandwich_variance(fit, build_scores(fit, sim.data)));
  }
}
BENCHMARK(BM_FitDmlLinear)->Unit(benchmark::kMillisecond);

void BM_MultiplierBootstrap(benchmark::State& state) {
  const SimResult sim = design(40, 100);
  const DmlFit fit = fit_dml(sim.data, PolySpec::cubic(), LearnerSpec::linear(), 5, 1);
  const InferenceState st = sandwich_variance(fit, build_scores(fit, sim.data));
  const GridSpec grid = GridSpec::uniform(1001);
  const BootstrapOptions opts{static_cast<std::size_t>(state.range(0)), 7, 1};
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap_inference(fit, st, grid, 0.05, opts));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MultiplierBootstrap)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_HomogeneousStatistic(benchmark::State& state) {
  const GridSpec grid = GridSpec::uniform(1001);
  std::vector<double> f(grid.points.size());
  std::vector<double> se(grid.points.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double x = grid.points[i];
    f[i] = 0.05 - 0.1 * x + 0.02 * x * x * x;
    se[i] = 0.01 + 0.02 * (x - 0.5) * (x - 0.5);
  }
  for (auto _ : state) benchmark::DoNotOptimize(homogeneous_statistic(f, se));
}
BENCHMARK(BM_HomogeneousStatistic);

}  // namespace

BENCHMARK_MAIN();
