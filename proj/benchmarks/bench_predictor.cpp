#include <benchmark/benchmark.h>

#include "esm/measurement.hpp"
#include "esm/predictor.hpp"

namespace {

struct Fixture {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  esm::MlpModel model;

  explicit Fixture(int n) {
    const auto& spec = esm::preset("resnet");
    const auto archs = esm::sample_random(spec, n, 7);
    const esm::OracleParams params;
    X.resize(n, esm::encoding_length(spec, esm::EncodingScheme::Fcc));
    y.resize(n);
    for (int i = 0; i < n; ++i) {
      const auto vec = esm::encode(spec, archs[i], esm::EncodingScheme::Fcc);
      X.row(i) = Eigen::Map<const Eigen::VectorXd>(
          vec.values.data(), static_cast<Eigen::Index>(vec.values.size()));
      y[i] = esm::oracle_mean(spec, archs[i], params);
    }
    esm::TrainConfig cfg;
    cfg.epochs = 5;
    model = esm::train(X, y, cfg);
  }
};

void BM_TrainEpoch(benchmark::State& state) {
  Fixture fixture(static_cast<int>(state.range(0)));
  esm::TrainConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) {
    auto model = esm::train(fixture.X, fixture.y, cfg);
    benchmark::DoNotOptimize(model);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainEpoch)->Arg(1000)->Arg(8000)->Unit(benchmark::kMillisecond);

void BM_PredictBatch(benchmark::State& state) {
  Fixture fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto preds = esm::predict_batch(fixture.model, fixture.X);
    benchmark::DoNotOptimize(preds);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PredictBatch)->Arg(1000)->Arg(8000);

void BM_OracleMeasure(benchmark::State& state) {
  const auto& spec = esm::preset("resnet");
  esm::OracleBackend backend(spec, esm::OracleParams{});
  const auto archs = esm::sample_random(spec, 32, 3);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto batch = esm::measure_batch(backend, archs, 150, seed++, "bench");
    benchmark::DoNotOptimize(batch);
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_OracleMeasure)->Unit(benchmark::kMillisecond);

}  // namespace
