#include <benchmark/benchmark.h>

#include "esm/encoding.hpp"

namespace {

void bench_scheme(benchmark::State& state, esm::EncodingScheme scheme) {
  const auto& spec = esm::preset("resnet");
  const auto archs = esm::sample_random(spec, 256, 1);
  std::size_t i = 0;
  for (auto _ : state) {
    auto vec = esm::encode(spec, archs[i++ % archs.size()], scheme);
    benchmark::DoNotOptimize(vec);
  }
  state.SetItemsProcessed(state.iterations());
}

void BM_EncodeFcc(benchmark::State& state) {
  bench_scheme(state, esm::EncodingScheme::Fcc);
}
void BM_EncodeFeatureCount(benchmark::State& state) {
  bench_scheme(state, esm::EncodingScheme::FeatureCount);
}
void BM_EncodeStatistical(benchmark::State& state) {
  bench_scheme(state, esm::EncodingScheme::Statistical);
}
void BM_EncodeOneHot(benchmark::State& state) {
  bench_scheme(state, esm::EncodingScheme::OneHot);
}

BENCHMARK(BM_EncodeFcc);
BENCHMARK(BM_EncodeFeatureCount);
BENCHMARK(BM_EncodeStatistical);
BENCHMARK(BM_EncodeOneHot);

}  // namespace
