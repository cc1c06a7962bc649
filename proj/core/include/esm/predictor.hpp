#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "esm/encoding.hpp"

namespace esm {

enum class Activation { Relu, Linear };

std::string to_string(Activation act);
Activation parse_activation(std::string_view tag);

struct TrainConfig {
  double learning_rate = 0.01;
  double weight_decay = 1e-4;  // decoupled, weights only
  int epochs = 300;
  int batch_size = 256;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  Activation activation = Activation::Relu;
  bool log_targets = false;  // train on log(ms), predict back in ms

  void validate() const;
};

// Three hidden layers of width 64 and a scalar output. Inputs are
// standardized by training-set statistics stored with the model.
struct MlpModel {
  std::vector<Eigen::MatrixXd> weights;  // [layer](out x in)
  std::vector<Eigen::VectorXd> biases;
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_std;  // zero-variance features get std 1
  Activation activation = Activation::Relu;
  bool log_targets = false;
  std::string spec_name;
  EncodingScheme scheme = EncodingScheme::Fcc;

  Eigen::Index input_dim() const { return weights.front().cols(); }
  std::size_t parameter_count() const;

  // Uniform fan-in init from the seeded stream; identity normalization.
  static MlpModel random_init(Eigen::Index input_dim,
                              const std::vector<Eigen::Index>& hidden,
                              std::uint64_t seed,
                              Activation act = Activation::Relu);
};

// X holds one sample per row. Targets are raw milliseconds. Deterministic
// given cfg.seed. Throws TrainError on non-finite loss.
MlpModel train(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
               const TrainConfig& cfg);

double predict(const MlpModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd predict_batch(const MlpModel& model, const Eigen::MatrixXd& X);

// max(0, 1 - |pred - actual| / actual)
double sample_accuracy(double pred, double actual);

enum class EvalStrategy { Overall, BinWise };

std::string to_string(EvalStrategy strategy);
EvalStrategy parse_eval_strategy(std::string_view tag);

struct EvalReport {
  double overall_accuracy = 0;
  std::vector<double> per_bin_accuracy;  // NaN for empty bins
  std::vector<int> per_bin_count;
  std::vector<int> empty_bins;
  std::vector<double> actual;
  std::vector<double> predicted;
  std::vector<int> sample_bins;
  bool pass = false;

  double min_bin_accuracy() const;
};

// Per-sample accuracies, bin means (empty bins excluded and reported) and
// the pass flag for the chosen strategy. Thresholds are inclusive.
EvalReport evaluate(const MlpModel& model, const Eigen::MatrixXd& X,
                    const Eigen::VectorXd& y,
                    const std::vector<int>& sample_bins, int n_bins,
                    EvalStrategy strategy, double acc_th);

// Max over parameters of |analytic - central difference| / (|analytic| + 1e-8)
// for the squared-error loss on one sample.
double gradient_check(const MlpModel& model, const Eigen::VectorXd& x,
                      double y, double epsilon);

void save_model(const MlpModel& model, const TrainConfig& cfg,
                const std::filesystem::path& path);
struct LoadedModel {
  MlpModel model;
  TrainConfig config;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace esm
