#include <benchmark/benchmark.h>

#include "gradlens/paradigm.hpp"

using namespace gradlens;

static void BM_AnalyticGrad(benchmark::State& state) {
  const auto kind = kAllLossKinds[static_cast<std::size_t>(state.range(0))];
  const EmbeddingBatch batch = random_batch(state.range(1), 64, 1);
  const LossParams p = LossParams::defaults();
  for (auto _ : state) benchmark::DoNotOptimize(analytic_grad(kind, batch, p));
  state.SetLabel(std::string(name(kind)));
}
BENCHMARK(BM_AnalyticGrad)->ArgsProduct({benchmark::CreateDenseRange(0, 12, 1), {32, 128}});

static void BM_Decompose(benchmark::State& state) {
  const auto kind = kAllLossKinds[static_cast<std::size_t>(state.range(0))];
  const EmbeddingBatch batch = random_batch(64, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(decompose(kind, batch, LossParams::defaults()));
  state.SetLabel(std::string(name(kind)));
}
BENCHMARK(BM_Decompose)->DenseRange(0, 12, 1);

static void BM_GradCheck(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(check(LossKind::kInfo, 10, 8, 16, LossParams::defaults(), 1));
  }
}
BENCHMARK(BM_GradCheck)->Unit(benchmark::kMillisecond);
