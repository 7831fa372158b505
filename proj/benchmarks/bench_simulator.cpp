#include <benchmark/benchmark.h>

#include <numbers>

#include "gradlens/simulator.hpp"

using namespace gradlens;

static void BM_SampleAndGd(benchmark::State& state) {
  DistributionSpec spec{std::numbers::pi / 4, 0.05, std::numbers::pi / 2, 0.10};
  NormalSampler normal(3);
  const LossParams p = LossParams::defaults();
  for (auto _ : state) {
    const AngleBatch a = sample_angles(spec, 127, normal);
    benchmark::DoNotOptimize(angle_gd(LossKind::kInfo, a, p));
  }
}
BENCHMARK(BM_SampleAndGd);

// One small grid; cells per second is the figure of interest.
static void BM_GdHeatmap(benchmark::State& state) {
  SweepProtocol proto;
  proto.n_grid = 10;
  proto.n_batches = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(gd_heatmap(LossKind::kMpt, proto, LossParams::defaults()));
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_GdHeatmap)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);
