#include <benchmark/benchmark.h>

#include "esm/archspace.hpp"

namespace {

void BM_SampleRandom(benchmark::State& state) {
  const auto& spec = esm::preset("resnet");
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto archs = esm::sample_random(spec, static_cast<int>(state.range(0)),
                                    seed++);
    benchmark::DoNotOptimize(archs);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SampleRandom)->Arg(100)->Arg(1000)->Arg(10000);

void BM_SampleBalanced(benchmark::State& state) {
  const auto& spec = esm::preset("resnet");
  const auto bins = esm::make_bins(spec, 4);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto archs = esm::sample_balanced(
        spec, static_cast<int>(state.range(0)), bins, seed++);
    benchmark::DoNotOptimize(archs);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SampleBalanced)->Arg(100)->Arg(1000)->Arg(10000);

void BM_CompositionTable(benchmark::State& state) {
  const auto& spec = esm::preset("densenet");
  for (auto _ : state) {
    esm::CompositionTable table(spec);
    benchmark::DoNotOptimize(table.count(50));
  }
}
BENCHMARK(BM_CompositionTable);

void BM_SpaceSize(benchmark::State& state) {
  const auto& spec = esm::preset("resnet");
  for (auto _ : state) {
    auto size = esm::space_size(spec);
    benchmark::DoNotOptimize(size);
  }
}
BENCHMARK(BM_SpaceSize);

}  // namespace

BENCHMARK_MAIN();
