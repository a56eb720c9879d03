#include <benchmark/benchmark.h>

#include "pfl/gradcheck.hpp"
#include "pfl/model.hpp"

namespace {

pfl::ModelConfig config_for(int preset) {
  if (preset == 0) return pfl::ModelConfig{};
  pfl::ModelConfig c;  // compact architecture used by the experiment harness
  c.feature_dim = 8;
  c.embed_dim = 16;
  c.heads = 2;
  c.latent_tokens = 4;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.ff_dim = 32;
  c.work_slots = 6;
  c.long_slots = 24;
  return c;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const pfl::Tensor a = pfl::Tensor::zeros(n, n);
  const pfl::Tensor b = pfl::Tensor::zeros(n, n);
  for (auto _ : state) benchmark::DoNotOptimize(pfl::matmul(a, b));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(32)->Arg(64);

void BM_Forward(benchmark::State& state) {
  const auto cfg = config_for(static_cast<int>(state.range(0)));
  const pfl::Lstr model(cfg);
  const auto params = model.init(1);
  const auto samples = pfl::random_samples(cfg, 1, 2);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(params, samples[0].memory));
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_LossAndGrads(benchmark::State& state) {
  const auto cfg = config_for(static_cast<int>(state.range(0)));
  const pfl::Lstr model(cfg);
  const auto params = model.init(1);
  const auto batch = pfl::random_samples(cfg, 8, 2);
  const auto sel = static_cast<pfl::PartitionSel>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(model.loss_and_grads(params, batch, sel));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_LossAndGrads)
    ->ArgsProduct({{0, 1}, {0, 1, 2}})
    ->Unit(benchmark::kMillisecond);

void BM_CachedDecoderStep(benchmark::State& state) {
  const auto cfg = config_for(static_cast<int>(state.range(0)));
  const pfl::Lstr model(cfg);
  const auto params = model.init(1);
  std::vector<pfl::ContextSample> batch;
  for (const auto& s : pfl::random_samples(cfg, 8, 2))
    batch.push_back({model.encode_context(params, s.memory), s.label});
  for (auto _ : state) benchmark::DoNotOptimize(model.decoder_loss_and_grads(params, batch));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_CachedDecoderStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
