#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "esm/error.hpp"
#include "esm/measurement.hpp"
#include "esm/predictor.hpp"
#include "esm/rng.hpp"

using namespace esm;

namespace {

Eigen::MatrixXd encode_all(const SupernetSpec& spec,
                           const std::vector<ArchConfig>& archs,
                           EncodingScheme scheme) {
  Eigen::MatrixXd X(archs.size(), encoding_length(spec, scheme));
  for (std::size_t i = 0; i < archs.size(); ++i) {
    const auto vec = encode(spec, archs[i], scheme);
    X.row(i) = Eigen::Map<const Eigen::VectorXd>(
        vec.values.data(), static_cast<Eigen::Index>(vec.values.size()));
  }
  return X;
}

Eigen::VectorXd oracle_targets(const SupernetSpec& spec,
                               const std::vector<ArchConfig>& archs,
                               const OracleParams& params) {
  Eigen::VectorXd y(archs.size());
  for (std::size_t i = 0; i < archs.size(); ++i)
    y[i] = oracle_mean(spec, archs[i], params);
  return y;
}

}  // namespace

TEST_CASE("sample_accuracy is relative error clamped at zero") {
  CHECK(sample_accuracy(10.0, 10.0) == 1.0);
  CHECK(sample_accuracy(9.0, 10.0) == doctest::Approx(0.9));
  CHECK(sample_accuracy(25.0, 10.0) == 0.0);
  CHECK_THROWS_AS(sample_accuracy(1.0, 0.0), ConfigError);
}

namespace {

// Central differences are only a valid oracle away from ReLU kinks: a
// preactivation inside the probe window flips the activation pattern.
double relu_margin(const MlpModel& model, const Eigen::VectorXd& x) {
  double margin = std::numeric_limits<double>::infinity();
  Eigen::VectorXd h = x;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    Eigen::VectorXd z = model.weights[l] * h + model.biases[l];
    if (l + 1 < model.weights.size()) {
      margin = std::min(margin, z.cwiseAbs().minCoeff());
      h = z.cwiseMax(0.0);
    }
  }
  return margin;
}

}  // namespace

TEST_CASE("gradient check: analytic backprop matches central differences") {
  Rng rng = make_rng(2024);
  std::uniform_real_distribution<double> input(-2.0, 2.0);
  double worst = 0;
  int checked = 0;
  for (int trial = 0; checked < 100; ++trial) {
    REQUIRE(trial < 300);  // margin rejections are rare
    const Eigen::Index dim = 2 + static_cast<Eigen::Index>(trial % 6);
    auto model = MlpModel::random_init(dim, {5, 4, 3},
                                       derive_seed(9, "model", trial));
    Eigen::VectorXd x(dim);
    for (Eigen::Index i = 0; i < dim; ++i) x[i] = input(rng);
    const double y = input(rng) * 3.0;
    if (relu_margin(model, x) < 1e-3) continue;
    worst = std::max(worst, gradient_check(model, x, y, 1e-4));
    ++checked;
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("gradient check with a linear activation is near machine precision") {
  auto model = MlpModel::random_init(4, {5, 4, 3}, 31, Activation::Linear);
  Eigen::VectorXd x(4);
  x << 0.3, -1.2, 0.7, 2.0;
  // quadratic loss in the parameters: central differences are exact up to
  // floating-point rounding
  CHECK(gradient_check(model, x, 1.5, 1e-4) < 1e-7);
}

TEST_CASE("zero output layer zeroes hidden gradients, matched numerically") {
  auto model = MlpModel::random_init(3, {4, 4, 4}, 77);
  model.weights.back().setZero();
  model.biases.back().setZero();
  Eigen::VectorXd x(3);
  x << 1.0, -0.5, 0.25;
  CHECK(gradient_check(model, x, 2.0, 1e-4) < 1e-3);
}

TEST_CASE("training on a constant-latency set fits the constant") {
  const auto& spec = preset("resnet");
  const auto archs = sample_random(spec, 300, 15);
  const auto X = encode_all(spec, archs, EncodingScheme::Fcc);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(300, 7.25);

  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.seed = 3;
  const auto model = train(X, y, cfg);
  const auto preds = predict_batch(model, X);
  double mse = 0;
  for (Eigen::Index i = 0; i < preds.size(); ++i) {
    CHECK(sample_accuracy(preds[i], 7.25) > 0.99);
    mse += (preds[i] - 7.25) * (preds[i] - 7.25);
  }
  mse /= static_cast<double>(preds.size());
  CHECK(mse / (7.25 * 7.25) < 1e-4);  // relative to target scale
}

TEST_CASE("training is bit-deterministic under a fixed seed") {
  const auto& spec = preset("resnet");
  const auto archs = sample_random(spec, 200, 5);
  const auto X = encode_all(spec, archs, EncodingScheme::Fcc);
  OracleParams params;
  const auto y = oracle_targets(spec, archs, params);

  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.seed = 42;
  const auto a = train(X, y, cfg);
  const auto b = train(X, y, cfg);
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    CHECK(a.weights[l] == b.weights[l]);
    CHECK(a.biases[l] == b.biases[l]);
  }
  cfg.seed = 43;
  const auto c = train(X, y, cfg);
  CHECK(a.weights[0] != c.weights[0]);
}

TEST_CASE("additive oracle with fcc encoding is learned to 99 percent") {
  // With alpha=gamma=0 the mean latency is an exact linear function of the
  // FCC histogram, so the MLP only has to recover a linear map.
  const auto& spec = preset("resnet");
  OracleParams params;
  params.alpha = 0;
  params.gamma = 0;
  params.sigma = 0;
  const auto bins = make_bins(spec, 4);
  const auto train_archs = sample_balanced(spec, 2000, bins, 71);
  const auto test_archs = sample_balanced(spec, 500, bins, 72);

  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.seed = 11;
  const auto model = train(encode_all(spec, train_archs, EncodingScheme::Fcc),
                           oracle_targets(spec, train_archs, params), cfg);

  const auto preds =
      predict_batch(model, encode_all(spec, test_archs, EncodingScheme::Fcc));
  const auto actual = oracle_targets(spec, test_archs, params);
  double acc = 0;
  for (Eigen::Index i = 0; i < preds.size(); ++i)
    acc += sample_accuracy(preds[i], actual[i]);
  acc /= static_cast<double>(preds.size());
  CHECK(acc >= 0.99);
}

TEST_CASE("predict is a function of the encoding alone") {
  const auto& spec = preset("resnet");
  const auto archs = sample_random(spec, 100, 19);
  OracleParams params;
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 1;
  const auto model = train(encode_all(spec, archs, EncodingScheme::Fcc),
                           oracle_targets(spec, archs, params), cfg);

  // permute blocks within a unit: same FCC encoding, same prediction
  auto arch = archs[0];
  arch.unit_depths[0] = 3;
  arch.block_features[0] = {{0, 0}, {1, 2}, {2, 1}};
  auto permuted = arch;
  std::swap(permuted.block_features[0][0], permuted.block_features[0][2]);
  const auto va = encode(spec, arch, EncodingScheme::Fcc);
  const auto vb = encode(spec, permuted, EncodingScheme::Fcc);
  CHECK(va.values == vb.values);
  const Eigen::Map<const Eigen::VectorXd> xa(va.values.data(),
                                             va.values.size());
  CHECK(predict(model, xa) == predict(model, xa));

  SUBCASE("batch predict equals elementwise predict") {
    const auto X = encode_all(spec, archs, EncodingScheme::Fcc);
    const auto batch = predict_batch(model, X);
    // GEMM accumulation order differs from the single-column path
    for (Eigen::Index i = 0; i < 10; ++i)
      CHECK(batch[i] ==
            doctest::Approx(predict(model, X.row(i).transpose()))
                .epsilon(1e-12));
  }
  SUBCASE("length mismatch raises") {
    CHECK_THROWS_AS(predict(model, Eigen::VectorXd::Zero(7)), TrainError);
  }
}

TEST_CASE("evaluate aggregates per bin and applies both strategies") {
  // Synthetic two-bin setup with a hand-built model is overkill; instead
  // check the bookkeeping directly through a trained model's report shape.
  const auto& spec = preset("resnet");
  const auto bins = make_bins(spec, 4);
  const auto archs = sample_balanced(spec, 400, bins, 7);
  OracleParams params;
  params.sigma = 0;
  TrainConfig cfg;
  cfg.epochs = 120;
  cfg.seed = 5;
  const auto X = encode_all(spec, archs, EncodingScheme::Fcc);
  const auto y = oracle_targets(spec, archs, params);
  const auto model = train(X, y, cfg);

  std::vector<int> sample_bins(archs.size());
  for (std::size_t i = 0; i < archs.size(); ++i)
    sample_bins[i] = bin_index(archs[i], bins);
  const auto report =
      evaluate(model, X, y, sample_bins, 4, EvalStrategy::BinWise, 0.5);

  CHECK(report.empty_bins.empty());
  // overall equals the size-weighted mean of bin accuracies
  double weighted = 0;
  int total = 0;
  for (int b = 0; b < 4; ++b) {
    weighted += report.per_bin_accuracy[b] * report.per_bin_count[b];
    total += report.per_bin_count[b];
  }
  CHECK(total == 400);
  CHECK(report.overall_accuracy == doctest::Approx(weighted / total));
  CHECK(report.actual.size() == 400);
  CHECK(report.predicted.size() == 400);
}

TEST_CASE("evaluate pass rules: inclusive threshold, bin_wise vs overall") {
  // Hand-built identity-ish model: predict exactly via a linear model with
  // one input. Build a model that computes y = x.
  MlpModel model;
  model.activation = Activation::Linear;
  model.input_mean = Eigen::VectorXd::Zero(1);
  model.input_std = Eigen::VectorXd::Ones(1);
  model.weights = {Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1)};
  model.biases = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};

  // bin 0: accuracies {0.97}; bin 1: {0.95}; overall 0.96
  Eigen::MatrixXd X(2, 1);
  X << 9.7, 9.5;
  Eigen::VectorXd y(2);
  y << 10.0, 10.0;
  const std::vector<int> sample_bins{0, 1};

  const auto bin_wise =
      evaluate(model, X, y, sample_bins, 2, EvalStrategy::BinWise, 0.96);
  CHECK(bin_wise.per_bin_accuracy[0] == doctest::Approx(0.97));
  CHECK(bin_wise.per_bin_accuracy[1] == doctest::Approx(0.95));
  CHECK_FALSE(bin_wise.pass);

  const auto overall =
      evaluate(model, X, y, sample_bins, 2, EvalStrategy::Overall, 0.96);
  CHECK(overall.overall_accuracy == doctest::Approx(0.96));
  CHECK(overall.pass);  // inclusive

  SUBCASE("single bin mean") {
    Eigen::MatrixXd X1(2, 1);
    X1 << 9.0, 10.0;
    Eigen::VectorXd y1(2);
    y1 << 10.0, 10.0;
    const auto report = evaluate(model, X1, y1, {0, 0}, 1,
                                 EvalStrategy::BinWise, 0.5);
    CHECK(report.per_bin_accuracy[0] == doctest::Approx(0.95));
  }
  SUBCASE("perfect predictor passes any threshold") {
    Eigen::MatrixXd Xp(3, 1);
    Xp << 1.0, 2.0, 3.0;
    Eigen::VectorXd yp(3);
    yp << 1.0, 2.0, 3.0;
    const auto report = evaluate(model, Xp, yp, {0, 0, 1}, 2,
                                 EvalStrategy::BinWise, 1.0);
    CHECK(report.pass);
    CHECK(report.overall_accuracy == 1.0);
  }
  SUBCASE("empty bins are excluded and reported") {
    const auto report =
        evaluate(model, X, y, sample_bins, 3, EvalStrategy::BinWise, 0.5);
    CHECK(report.empty_bins == std::vector<int>{2});
    CHECK(std::isnan(report.per_bin_accuracy[2]));
  }
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  Eigen::MatrixXd X(4, 2);
  X << 1, 2, 3, 4, 5, 6, 7, 8;
  Eigen::VectorXd y(4);
  y << 1e300, -1e300, 1e300, -1e300;
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 1e10;
  CHECK_THROWS_AS(train(X, y, cfg), TrainError);
}

TEST_CASE("model checkpoints round-trip") {
  const auto& spec = preset("resnet");
  const auto archs = sample_random(spec, 100, 3);
  OracleParams params;
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 21;
  auto model = train(encode_all(spec, archs, EncodingScheme::Fcc),
                     oracle_targets(spec, archs, params), cfg);
  model.spec_name = spec.name;
  model.scheme = EncodingScheme::Fcc;

  const auto path = std::filesystem::temp_directory_path() / "esm_model.jsonl";
  save_model(model, cfg, path);
  const auto loaded = load_model(path);
  CHECK(loaded.model.spec_name == model.spec_name);
  CHECK(loaded.model.scheme == model.scheme);
  CHECK(loaded.model.activation == model.activation);
  CHECK(loaded.config.epochs == cfg.epochs);
  CHECK(loaded.config.seed == cfg.seed);
  CHECK(loaded.model.input_mean == model.input_mean);
  CHECK(loaded.model.input_std == model.input_std);
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    CHECK(loaded.model.weights[l] == model.weights[l]);
    CHECK(loaded.model.biases[l] == model.biases[l]);
  }
  // identical predictions after reload
  const auto X = encode_all(spec, archs, EncodingScheme::Fcc);
  CHECK(predict_batch(loaded.model, X) == predict_batch(model, X));
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
