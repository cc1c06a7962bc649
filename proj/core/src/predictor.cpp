#include "esm/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "esm/error.hpp"
#include "esm/jsonio.hpp"
#include "esm/rng.hpp"
#include "esm/version.hpp"
#include "record_io.hpp"

namespace esm {

std::string to_string(Activation act) {
  return act == Activation::Relu ? "relu" : "linear";
}

Activation parse_activation(std::string_view tag) {
  if (tag == "relu") return Activation::Relu;
  if (tag == "linear") return Activation::Linear;
  throw SchemaError("unknown activation '" + std::string(tag) + "'");
}

std::string to_string(EvalStrategy strategy) {
  return strategy == EvalStrategy::Overall ? "overall" : "bin_wise";
}

EvalStrategy parse_eval_strategy(std::string_view tag) {
  if (tag == "overall") return EvalStrategy::Overall;
  if (tag == "bin_wise" || tag == "binwise") return EvalStrategy::BinWise;
  throw SchemaError("unknown evaluation strategy '" + std::string(tag) + "'");
}

void TrainConfig::validate() const {
  if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw ConfigError("adam betas must lie in [0, 1)");
  if (adam_epsilon <= 0) throw ConfigError("adam_epsilon must be > 0");
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  return n;
}

MlpModel MlpModel::random_init(Eigen::Index input_dim,
                               const std::vector<Eigen::Index>& hidden,
                               std::uint64_t seed, Activation act) {
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  MlpModel model;
  model.activation = act;
  model.input_mean = Eigen::VectorXd::Zero(input_dim);
  model.input_std = Eigen::VectorXd::Ones(input_dim);
  Rng rng = make_rng(seed);
  Eigen::Index in = input_dim;
  std::vector<Eigen::Index> dims = hidden;
  dims.push_back(1);  // scalar output
  for (Eigen::Index out : dims) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    Eigen::MatrixXd w(out, in);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) w(r, c) = uniform(rng);
    model.weights.push_back(std::move(w));
    model.biases.push_back(Eigen::VectorXd::Zero(out));
    in = out;
  }
  return model;
}

namespace {

constexpr Eigen::Index kHiddenWidth = 64;
constexpr int kHiddenLayers = 3;

Eigen::MatrixXd apply_activation(const Eigen::MatrixXd& z, Activation act) {
  if (act == Activation::Linear) return z;
  return z.cwiseMax(0.0);
}

// Columns are samples. Returns all layer activations; activations[0] is the
// normalized input, activations.back() the 1 x n output row.
std::vector<Eigen::MatrixXd> forward_all(const MlpModel& model,
                                         const Eigen::MatrixXd& x_cols) {
  std::vector<Eigen::MatrixXd> activations;
  activations.reserve(model.weights.size() + 1);
  activations.push_back(((x_cols.colwise() - model.input_mean).array().colwise() /
                         model.input_std.array())
                            .matrix());
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    Eigen::MatrixXd z =
        (model.weights[l] * activations.back()).colwise() + model.biases[l];
    const bool last = l + 1 == model.weights.size();
    activations.push_back(last ? std::move(z)
                               : apply_activation(z, model.activation));
  }
  return activations;
}

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

Gradients zero_like(const MlpModel& model) {
  Gradients g;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    g.weights.emplace_back(
        Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
    g.biases.emplace_back(Eigen::VectorXd::Zero(model.biases[l].size()));
  }
  return g;
}

// MSE backprop over a column batch. Returns the batch loss.
double backward(const MlpModel& model,
                const std::vector<Eigen::MatrixXd>& activations,
                const Eigen::RowVectorXd& targets, Gradients& grads) {
  const auto n = static_cast<double>(targets.size());
  const Eigen::RowVectorXd residual =
      activations.back().row(0) - targets;  // predictions - targets
  const double loss = residual.squaredNorm() / n;

  // dL/d(output row): 2/n * residual
  Eigen::MatrixXd delta = (2.0 / n) * residual;
  for (std::size_t l = model.weights.size(); l-- > 0;) {
    grads.weights[l].noalias() = delta * activations[l].transpose();
    grads.biases[l] = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = model.weights[l].transpose() * delta;
    if (model.activation == Activation::Relu)
      back = back.array() * (activations[l].array() > 0.0).cast<double>();
    delta = std::move(back);
  }
  return loss;
}

struct AdamState {
  Gradients m;
  Gradients v;
  long step = 0;
};

// Adam with decoupled weight decay: the decay term skips the moment
// estimates and is applied to weight matrices only, never to biases.
template <typename Param>
void adam_step_param(Param& param, const Param& grad, Param& m, Param& v,
                     const TrainConfig& cfg, double bc1, double bc2,
                     bool decay) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = (cfg.beta2 * v.array() + (1.0 - cfg.beta2) * grad.array().square())
          .matrix();
  auto update =
      ((m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.adam_epsilon))
          .eval();
  if (decay) update += cfg.weight_decay * param.array();
  param.array() -= cfg.learning_rate * update;
}

void adam_update(MlpModel& model, const Gradients& grads, AdamState& state,
                 const TrainConfig& cfg) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    adam_step_param(model.weights[l], grads.weights[l], state.m.weights[l],
                    state.v.weights[l], cfg, bc1, bc2, true);
    adam_step_param(model.biases[l], grads.biases[l], state.m.biases[l],
                    state.v.biases[l], cfg, bc1, bc2, false);
  }
}

}  // namespace

MlpModel train(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
               const TrainConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (n == 0) throw TrainError("training set is empty");
  if (y.size() != n) throw TrainError("target count does not match sample count");

  MlpModel model = MlpModel::random_init(
      d, std::vector<Eigen::Index>(kHiddenLayers, kHiddenWidth), cfg.seed,
      cfg.activation);
  model.log_targets = cfg.log_targets;

  // Standardize inputs with training statistics; constant features get std 1.
  model.input_mean = X.colwise().mean().transpose();
  const Eigen::VectorXd var =
      ((X.rowwise() - model.input_mean.transpose()).array().square())
          .colwise()
          .mean()
          .transpose();
  model.input_std = var.array().sqrt().matrix();
  for (Eigen::Index i = 0; i < d; ++i)
    if (model.input_std[i] <= 0.0) model.input_std[i] = 1.0;

  Eigen::VectorXd targets = y;
  if (cfg.log_targets) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(y[i] > 0)) throw TrainError("log-target training needs y > 0");
      targets[i] = std::log(y[i]);
    }
  }
  // Start the output bias at the target mean so the first iterations fit
  // structure instead of the offset.
  model.biases.back()[0] = targets.mean();

  const Eigen::MatrixXd x_cols = X.transpose();
  Rng rng = make_rng(derive_seed(cfg.seed, "shuffle"));
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);

  AdamState adam{zero_like(model), zero_like(model), 0};
  Gradients grads = zero_like(model);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index count =
          std::min<Eigen::Index>(cfg.batch_size, n - start);
      Eigen::MatrixXd batch(d, count);
      Eigen::RowVectorXd batch_y(count);
      for (Eigen::Index i = 0; i < count; ++i) {
        batch.col(i) = x_cols.col(order[start + i]);
        batch_y[i] = targets[order[start + i]];
      }
      const auto activations = forward_all(model, batch);
      const double loss = backward(model, activations, batch_y, grads);
      if (!std::isfinite(loss))
        throw TrainError("non-finite loss at epoch " + std::to_string(epoch) +
                         ", batch offset " + std::to_string(start) +
                         "; lower the learning rate or check target scale");
      adam_update(model, grads, adam, cfg);
    }
  }
  return model;
}

Eigen::VectorXd predict_batch(const MlpModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.input_dim())
    throw TrainError("input length " + std::to_string(X.cols()) +
                     " does not match model input " +
                     std::to_string(model.input_dim()));
  const auto activations = forward_all(model, X.transpose());
  Eigen::VectorXd out = activations.back().row(0).transpose();
  if (model.log_targets) out = out.array().exp();
  return out;
}

double predict(const MlpModel& model, const Eigen::VectorXd& x) {
  return predict_batch(model, x.transpose())[0];
}

double sample_accuracy(double pred, double actual) {
  if (!(actual > 0)) throw ConfigError("actual latency must be > 0");
  return std::max(0.0, 1.0 - std::abs(pred - actual) / actual);
}

double EvalReport::min_bin_accuracy() const {
  double lowest = 1.0;
  bool seen = false;
  for (std::size_t b = 0; b < per_bin_accuracy.size(); ++b) {
    if (per_bin_count[b] == 0) continue;
    lowest = seen ? std::min(lowest, per_bin_accuracy[b]) : per_bin_accuracy[b];
    seen = true;
  }
  return seen ? lowest : std::numeric_limits<double>::quiet_NaN();
}

EvalReport evaluate(const MlpModel& model, const Eigen::MatrixXd& X,
                    const Eigen::VectorXd& y,
                    const std::vector<int>& sample_bins, int n_bins,
                    EvalStrategy strategy, double acc_th) {
  const Eigen::Index n = X.rows();
  if (n == 0) throw ConfigError("evaluation set is empty");
  if (y.size() != n || sample_bins.size() != static_cast<std::size_t>(n))
    throw ConfigError("evaluation inputs are misaligned");

  EvalReport report;
  report.per_bin_accuracy.assign(n_bins,
                                 std::numeric_limits<double>::quiet_NaN());
  report.per_bin_count.assign(n_bins, 0);
  report.actual.resize(n);
  report.predicted.resize(n);
  report.sample_bins = sample_bins;

  const Eigen::VectorXd preds = predict_batch(model, X);
  std::vector<double> bin_sum(n_bins, 0.0);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int b = sample_bins[i];
    if (b < 0 || b >= n_bins) throw ConfigError("sample bin out of range");
    const double acc = sample_accuracy(preds[i], y[i]);
    report.actual[i] = y[i];
    report.predicted[i] = preds[i];
    bin_sum[b] += acc;
    ++report.per_bin_count[b];
    total += acc;
  }
  report.overall_accuracy = total / static_cast<double>(n);
  bool all_pass = true;
  for (int b = 0; b < n_bins; ++b) {
    if (report.per_bin_count[b] == 0) {
      report.empty_bins.push_back(b);
      continue;
    }
    report.per_bin_accuracy[b] = bin_sum[b] / report.per_bin_count[b];
    if (report.per_bin_accuracy[b] < acc_th) all_pass = false;
  }
  if (static_cast<int>(report.empty_bins.size()) == n_bins)
    throw ConfigError("every bin is empty in evaluation");
  report.pass = strategy == EvalStrategy::BinWise
                    ? all_pass
                    : report.overall_accuracy >= acc_th;
  return report;
}

double gradient_check(const MlpModel& model, const Eigen::VectorXd& x,
                      double y, double epsilon) {
  if (epsilon <= 0) throw ConfigError("epsilon must be > 0");
  if (x.size() != model.input_dim())
    throw TrainError("gradient_check input length mismatch");

  // Analytic gradient via the shared backprop path (batch of one).
  const Eigen::MatrixXd x_col = x;
  Eigen::RowVectorXd target(1);
  target[0] = y;
  Gradients grads = zero_like(model);
  backward(model, forward_all(model, x_col), target, grads);

  MlpModel probe = model;
  auto loss_at = [&]() {
    const auto activations = forward_all(probe, x_col);
    const double r = activations.back()(0, 0) - y;
    return r * r;
  };

  double worst = 0.0;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    auto check_param = [&](double& value, double analytic) {
      const double saved = value;
      value = saved + epsilon;
      const double up = loss_at();
      value = saved - epsilon;
      const double down = loss_at();
      value = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double err =
          std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8);
      worst = std::max(worst, err);
    };
    for (Eigen::Index r = 0; r < probe.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < probe.weights[l].cols(); ++c)
        check_param(probe.weights[l](r, c), grads.weights[l](r, c));
    for (Eigen::Index r = 0; r < probe.biases[l].size(); ++r)
      check_param(probe.biases[l][r], grads.biases[l][r]);
  }
  return worst;
}

namespace {

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  const auto rows = j.size();
  if (rows == 0) throw SchemaError("empty weight matrix");
  const auto cols = j.at(0).size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j.at(r).size() != cols) throw SchemaError("ragged weight matrix");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

Json vector_to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

Json train_config_to_json(const TrainConfig& cfg) {
  return Json{{"learning_rate", cfg.learning_rate},
              {"weight_decay", cfg.weight_decay},
              {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"seed", cfg.seed},
              {"beta1", cfg.beta1},
              {"beta2", cfg.beta2},
              {"adam_epsilon", cfg.adam_epsilon},
              {"activation", to_string(cfg.activation)},
              {"log_targets", cfg.log_targets}};
}

TrainConfig train_config_from_json(const Json& j) {
  check_keys(j,
             {"learning_rate", "weight_decay", "epochs", "batch_size", "seed",
              "beta1", "beta2", "adam_epsilon", "activation", "log_targets"},
             {}, "train config");
  TrainConfig cfg;
  j.at("learning_rate").get_to(cfg.learning_rate);
  j.at("weight_decay").get_to(cfg.weight_decay);
  j.at("epochs").get_to(cfg.epochs);
  j.at("batch_size").get_to(cfg.batch_size);
  j.at("seed").get_to(cfg.seed);
  j.at("beta1").get_to(cfg.beta1);
  j.at("beta2").get_to(cfg.beta2);
  j.at("adam_epsilon").get_to(cfg.adam_epsilon);
  cfg.activation = parse_activation(j.at("activation").get<std::string>());
  j.at("log_targets").get_to(cfg.log_targets);
  return cfg;
}

}  // namespace

void save_model(const MlpModel& model, const TrainConfig& cfg,
                const std::filesystem::path& path) {
  detail::RecordWriter writer(path);
  writer.write(Json{{"type", "header"},
                    {"format_version", kFormatVersion},
                    {"kind", "model"},
                    {"spec_name", model.spec_name},
                    {"scheme", to_string(model.scheme)},
                    {"activation", to_string(model.activation)},
                    {"log_targets", model.log_targets},
                    {"train_config", train_config_to_json(cfg)}});
  writer.write(Json{{"type", "normalization"},
                    {"mean", vector_to_json(model.input_mean)},
                    {"std", vector_to_json(model.input_std)}});
  for (std::size_t l = 0; l < model.weights.size(); ++l)
    writer.write(Json{{"type", "layer"},
                      {"index", l},
                      {"weights", matrix_to_json(model.weights[l])},
                      {"biases", vector_to_json(model.biases[l])}});
  writer.finish();
}

LoadedModel load_model(const std::filesystem::path& path) {
  detail::RecordReader reader(path);
  const Json& header = reader.header("model");
  check_keys(header,
             {"type", "format_version", "kind", "spec_name", "scheme",
              "activation", "log_targets", "train_config"},
             {}, "model header");
  LoadedModel loaded;
  MlpModel& model = loaded.model;
  header.at("spec_name").get_to(model.spec_name);
  model.scheme = parse_scheme(header.at("scheme").get<std::string>());
  model.activation = parse_activation(header.at("activation").get<std::string>());
  header.at("log_targets").get_to(model.log_targets);
  loaded.config = train_config_from_json(header.at("train_config"));

  bool norm_seen = false;
  for (const Json& record : reader.body()) {
    const std::string type = record.value("type", "");
    if (type == "normalization") {
      check_keys(record, {"type", "mean", "std"}, {}, "normalization record");
      model.input_mean = vector_from_json(record.at("mean"));
      model.input_std = vector_from_json(record.at("std"));
      norm_seen = true;
    } else if (type == "layer") {
      check_keys(record, {"type", "index", "weights", "biases"}, {},
                 "layer record");
      if (record.at("index").get<std::size_t>() != model.weights.size())
        throw SchemaError("model layers out of order in '" + path.string() +
                          "'");
      model.weights.push_back(matrix_from_json(record.at("weights")));
      model.biases.push_back(vector_from_json(record.at("biases")));
    } else {
      throw SchemaError("unknown record type '" + type + "' in model file");
    }
  }
  if (!norm_seen || model.weights.empty())
    throw SchemaError("model file is missing normalization or layers");
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    if (model.weights[l].rows() != model.biases[l].size())
      throw SchemaError("layer " + std::to_string(l) + " bias shape mismatch");
    if (l > 0 && model.weights[l].cols() != model.weights[l - 1].rows())
      throw SchemaError("layer " + std::to_string(l) + " does not chain");
  }
  if (model.weights.back().rows() != 1)
    throw SchemaError("model output layer must be scalar");
  if (model.input_mean.size() != model.input_dim() ||
      model.input_std.size() != model.input_dim())
    throw SchemaError("normalization length does not match input width");
  return loaded;
}

}  // namespace esm
