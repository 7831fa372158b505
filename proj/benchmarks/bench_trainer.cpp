#include <benchmark/benchmark.h>

#include "gradlens/trainer.hpp"

using namespace gradlens;

static void BM_OutputGradients(benchmark::State& state) {
  const auto n = state.range(0);
  const EmbeddingBatch views = random_batch(n, 64, 4);
  Matrix ga, gb;
  for (auto _ : state) {
    output_gradients(LossKind::kBaseline, LossParams::defaults(), views.anchors(), views.positives(), ga, gb);
    benchmark::DoNotOptimize(ga.data());
  }
}
BENCHMARK(BM_OutputGradients)->Arg(64)->Arg(128);

static void BM_TrainSteps(benchmark::State& state) {
  TrainerConfig c;
  c.steps = 50;
  c.eval_interval = 50;
  for (auto _ : state) benchmark::DoNotOptimize(train(c).trace.digest);
  state.SetItemsProcessed(state.iterations() * 50);
}
BENCHMARK(BM_TrainSteps)->Unit(benchmark::kMillisecond);
