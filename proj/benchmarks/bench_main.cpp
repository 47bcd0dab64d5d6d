#include <benchmark/benchmark.h>

#include "mcsttm/data.hpp"
#include "mcsttm/model.hpp"
#include "mcsttm/ops.hpp"
#include "mcsttm/synthetic.hpp"
#include "mcsttm/training.hpp"

using namespace mcsttm;

namespace {

ModelConfig bench_config(std::size_t features) {
  ModelConfig cfg;
  cfg.nodes = 5;
  cfg.hour_len = 12;
  cfg.day_len = 3;
  cfg.horizon = 12;
  cfg.features = features;
  cfg.blocks = 1;
  cfg.heads = 4;
  cfg.hidden = 4 * features;
  return cfg;
}

struct Fixture {
  explicit Fixture(std::size_t features) {
    SynthSpec spec;
    spec.days = 5;
    SynthData synth = generate(spec);
    data = prepare_dataset(synth.series, synth.graph, bench_config(features));
    params = ModelParams::random(data.cfg, 1);
    const std::vector<std::int64_t> anchors(data.split.train.begin(), data.split.train.begin() + 32);
    batch = make_channels(data.normalized, anchors, data.cfg);
  }
  Dataset data;
  ModelParams params;
  ChannelBatch batch;
};

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = uniform_tensor({n, n}, 1.0, rng);
  const Tensor b = uniform_tensor({n, n}, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(256);

void BM_BatchedMatmul(benchmark::State& state) {
  Rng rng(2);
  const Tensor a = uniform_tensor({32, 5, 4, 12, 16}, 1.0, rng);
  const Tensor b = uniform_tensor({32, 5, 4, 16, 12}, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(BM_BatchedMatmul);

void BM_ModelForward(benchmark::State& state) {
  const Fixture fx(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    NoGradGuard no_grad;
    benchmark::DoNotOptimize(model_forward(fx.batch, fx.params, fx.data.cfg, fx.data.adj));
  }
}
BENCHMARK(BM_ModelForward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ModelForwardBackward(benchmark::State& state) {
  const Fixture fx(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    const Tensor loss = mae_loss(model_forward(fx.batch, fx.params, fx.data.cfg, fx.data.adj), fx.batch.y);
    loss.backward();
    for (const auto& p : fx.params.named()) p.tensor.node()->grad.clear();
  }
}
BENCHMARK(BM_ModelForwardBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainEpoch(benchmark::State& state) {
  const Fixture fx(16);
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch_size = 32;
  tc.max_epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train(fx.data, tc, fx.params));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond)->Iterations(2);

}  // namespace
BENCHMARK_MAIN();
