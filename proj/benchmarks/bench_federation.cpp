#include <benchmark/benchmark.h>

#include "pfl/experiments.hpp"

namespace {

void BM_Aggregate(benchmark::State& state) {
  const auto config = pfl::standard_benchmark();
  const pfl::Lstr model(config.model);
  std::vector<pfl::Candidate> candidates;
  for (int i = 0; i < state.range(0); ++i)
    candidates.push_back({i, model.init(static_cast<std::uint64_t>(i)).subset(
                                 pfl::Partition::kEncoder),
                          static_cast<std::size_t>(10 + i)});
  for (auto _ : state) benchmark::DoNotOptimize(pfl::aggregate(candidates));
}
BENCHMARK(BM_Aggregate)->Arg(2)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_MemoryPush(benchmark::State& state) {
  const pfl::MemoryConfig mc;
  pfl::MemoryState memory(mc, 48);
  pfl::FeatureFrame frame{std::vector<double>(48, 0.5), 0};
  for (auto _ : state) {
    ++frame.timestamp;
    memory.push(frame);
  }
}
BENCHMARK(BM_MemoryPush);

void BM_Round(benchmark::State& state) {
  const auto config = pfl::standard_benchmark();
  const pfl::Lstr model(config.model);
  const auto datasets = pfl::make_datasets(config, 1);
  std::vector<pfl::ClientState> clients;
  for (std::size_t i = 0; i < datasets.size(); ++i)
    clients.push_back(
        pfl::ClientState::make(config.clients[i].client_id, datasets[i], config.memory));
  auto fed = config.federation;
  fed.seed = 1;
  auto server = pfl::fedavg_init(model, clients, fed);
  for (auto _ : state) benchmark::DoNotOptimize(pfl::run_round(model, server, clients, fed));
}
BENCHMARK(BM_Round)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_Evaluate(benchmark::State& state) {
  const auto config = pfl::standard_benchmark();
  const pfl::Lstr model(config.model);
  const auto params = model.init(1);
  const auto ds = pfl::make_datasets(config, 1).front();
  for (auto _ : state) benchmark::DoNotOptimize(pfl::evaluate(model, params, ds, config.memory));
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);

}  // namespace
