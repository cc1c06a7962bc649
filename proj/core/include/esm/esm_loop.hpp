#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "esm/dataset.hpp"
#include "esm/measurement.hpp"
#include "esm/predictor.hpp"

namespace esm {

enum class SamplingStrategy { Random, Balanced };

std::string to_string(SamplingStrategy strategy);
SamplingStrategy parse_strategy(std::string_view tag);

enum class BackendKind { Oracle, External };

struct BackendConfig {
  BackendKind kind = BackendKind::Oracle;
  OracleParams oracle;
  ExternalBackendOptions external;
};

std::unique_ptr<MeasurementBackend> make_backend(const BackendConfig& config,
                                                 const SupernetSpec& spec);

// Every user input of the pipeline in one place. All randomness derives
// from root_seed through named substreams.
struct EsmConfig {
  SupernetSpec spec;
  SamplingStrategy strategy = SamplingStrategy::Balanced;
  BackendConfig backend;
  int n_initial = 300;           // N_I
  int n_step = 100;              // N_Step
  double w_below = 3;            // w1: weight of below-threshold bins
  double w_above = 1;            // w2: weight of above-threshold bins
  EncodingScheme scheme = EncodingScheme::Fcc;
  EvalStrategy eval_strategy = EvalStrategy::BinWise;
  int n_bins = 4;                // N_Bins
  double acc_th = 0.9;           // Acc_TH
  int max_iterations = 50;
  int test_size = 1000;
  int runs_per_arch = 150;
  int n_references = 5;
  double qc_threshold = 0.03;
  int qc_max_retries = 3;
  std::uint64_t root_seed = 0;
  TrainConfig train;

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  std::size_t dataset_size = 0;  // non-reference samples trained on
  std::vector<double> bin_accuracy;
  double overall_accuracy = 0;
  bool pass = false;
  double wall_time_s = 0;
  std::vector<int> allocation;  // samples added after this iteration
  std::uint64_t train_seed = 0;
};

struct EsmHistory {
  std::vector<IterationRecord> iterations;
  bool converged = false;
};

// Algorithm-1 weighted allocation: bins below acc_th get ceil(n_step*w1/N_norm)
// new samples each, bins at or above get ceil(n_step*w2/N_norm), with
// N_norm = w1*|below| + w2*|above|. NaN entries (bins without accuracy data)
// receive nothing. Ceilings make the total land in [n_step, n_step + n_bins].
std::vector<int> allocate_extension(const std::vector<double>& bin_accs,
                                    double acc_th, double w1, double w2,
                                    int n_step);

struct MeasureOptions {
  int runs_per_arch = 150;
  double qc_threshold = 0.03;
  int qc_max_retries = 3;
};

// Injects references, measures one batch, QC-checks the reference ledger
// and re-measures outlier batches before appending. Throws QcError once the
// retry budget is exhausted.
void measure_and_append(LatencyDataset& ds, MeasurementBackend& backend,
                        const std::vector<ArchConfig>& archs,
                        const MeasureOptions& options,
                        const std::string& batch_id, std::uint64_t seed);

// Draws `allocation[b]` balanced samples inside each bin (or n_step random
// samples for the random strategy), measures them and returns the extended
// dataset with a bumped version.
LatencyDataset extend_dataset(const LatencyDataset& ds,
                              const std::vector<int>& allocation,
                              MeasurementBackend& backend,
                              const MeasureOptions& options,
                              std::uint64_t seed);

struct EsmCallbacks {
  // Invoked after each evaluation with the fresh record and full report.
  std::function<void(const IterationRecord&, const EvalReport&)> on_iteration;
};

struct EsmResult {
  MlpModel model;
  EsmHistory history;
  LatencyDataset dataset;
  LatencyDataset test_set;
};

// The full loop: sample N_I, measure, train, evaluate on a fixed balanced
// test set, and extend until the accuracy constraint passes or
// max_iterations is reached.
EsmResult run_esm(const EsmConfig& cfg, const EsmCallbacks& callbacks = {});

}  // namespace esm
