#include "esm/esm_loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>

#include "esm/error.hpp"
#include "esm/rng.hpp"

namespace esm {

std::string to_string(SamplingStrategy strategy) {
  return strategy == SamplingStrategy::Random ? "random" : "balanced";
}

SamplingStrategy parse_strategy(std::string_view tag) {
  if (tag == "random") return SamplingStrategy::Random;
  if (tag == "balanced") return SamplingStrategy::Balanced;
  throw ConfigError("unknown sampling strategy '" + std::string(tag) +
                    "' (expected random or balanced)");
}

std::unique_ptr<MeasurementBackend> make_backend(const BackendConfig& config,
                                                 const SupernetSpec& spec) {
  if (config.kind == BackendKind::Oracle)
    return std::make_unique<OracleBackend>(spec, config.oracle);
  return std::make_unique<ExternalBackend>(config.external);
}

void EsmConfig::validate() const {
  spec.validate();
  if (n_initial < 1) throw ConfigError("n_initial must be >= 1");
  if (strategy == SamplingStrategy::Balanced && n_initial < n_bins)
    throw ConfigError("balanced strategy needs n_initial >= n_bins");
  if (n_step < 1) throw ConfigError("n_step must be >= 1");
  if (!(w_below > 0) || !(w_above > 0))
    throw ConfigError("extension weights must be > 0");
  // 0 is tolerated as an explicit "accept anything" threshold.
  if (!(acc_th >= 0 && acc_th <= 1))
    throw ConfigError("acc_th must lie in [0, 1]");
  if (n_bins < 1) throw ConfigError("n_bins must be >= 1");
  if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  if (test_size < 1) throw ConfigError("test_size must be >= 1");
  if (runs_per_arch < 5) throw ConfigError("runs_per_arch must be >= 5");
  if (n_references < 0) throw ConfigError("n_references must be >= 0");
  if (qc_threshold < 0) throw ConfigError("qc_threshold must be >= 0");
  if (qc_max_retries < 0) throw ConfigError("qc_max_retries must be >= 0");
  train.validate();
}

std::vector<int> allocate_extension(const std::vector<double>& bin_accs,
                                    double acc_th, double w1, double w2,
                                    int n_step) {
  if (!(w1 > 0) || !(w2 > 0)) throw ConfigError("weights must be > 0");
  if (n_step < 1) throw ConfigError("n_step must be >= 1");
  int below = 0, above = 0;
  for (double acc : bin_accs) {
    if (std::isnan(acc)) continue;
    if (acc < acc_th)
      ++below;
    else
      ++above;
  }
  if (below + above == 0)
    throw ConfigError("no bin has accuracy data; cannot allocate extension");
  const double norm = w1 * below + w2 * above;
  const int per_below =
      static_cast<int>(std::ceil(static_cast<double>(n_step) * w1 / norm));
  const int per_above =
      static_cast<int>(std::ceil(static_cast<double>(n_step) * w2 / norm));
  std::vector<int> allocation(bin_accs.size(), 0);
  for (std::size_t b = 0; b < bin_accs.size(); ++b) {
    if (std::isnan(bin_accs[b])) continue;
    allocation[b] = bin_accs[b] < acc_th ? per_below : per_above;
  }
  return allocation;
}

namespace {

// Per-reference aggregated values for every batch in the dataset, in batch
// order. Every batch is expected to carry every reference once.
RefHistory collect_ref_history(const LatencyDataset& ds) {
  RefHistory history;
  std::vector<std::string> batch_order;
  std::map<std::string, std::size_t> batch_slot;
  for (const auto& s : ds.samples)
    if (!batch_slot.contains(s.batch_id)) {
      batch_slot.emplace(s.batch_id, batch_order.size());
      batch_order.push_back(s.batch_id);
    }
  history.batch_ids = batch_order;
  history.values.assign(ds.refs.size(),
                        std::vector<double>(batch_order.size(), 0.0));
  std::vector<std::vector<bool>> seen(
      ds.refs.size(), std::vector<bool>(batch_order.size(), false));
  for (const auto& s : ds.samples) {
    if (!s.is_reference) continue;
    if (s.ref_index < 0 ||
        static_cast<std::size_t>(s.ref_index) >= ds.refs.size())
      throw Error("reference sample with invalid ref_index");
    const std::size_t b = batch_slot.at(s.batch_id);
    history.values[s.ref_index][b] = s.latency_ms;
    seen[s.ref_index][b] = true;
  }
  for (const auto& row : seen)
    for (bool ok : row)
      if (!ok) throw Error("a batch is missing reference measurements");
  return history;
}

void append_batch(LatencyDataset& ds, MeasurementBackend& backend,
                  const std::vector<ArchConfig>& archs, int runs_per_arch,
                  const std::string& batch_id, std::uint64_t seed) {
  const auto plan = inject_references(archs, ds.refs);
  std::vector<ArchConfig> to_measure;
  to_measure.reserve(plan.size());
  for (const auto& entry : plan) to_measure.push_back(entry.arch);
  const auto batch =
      measure_batch(backend, to_measure, runs_per_arch, seed, batch_id);
  for (const auto& failure : batch.failures)
    std::cerr << "[esm] warning: measurement failed for " << failure.arch_id
              << ": " << failure.reason << "\n";
  if (batch.measured.size() != plan.size()) {
    // Align measured results back to plan entries by arch_id suffix.
    std::map<std::string, const MeasuredArch*> by_id;
    for (const auto& m : batch.measured) by_id.emplace(m.arch_id, &m);
    std::size_t counter = ds.samples.size();
    for (std::size_t i = 0; i < plan.size(); ++i) {
      auto it = by_id.find(batch_id + "/" + std::to_string(i));
      if (it == by_id.end()) {
        if (plan[i].ref_index >= 0)
          throw BackendError("reference model failed to measure in batch " +
                             batch_id);
        continue;
      }
      Sample s;
      s.id = "s" + std::to_string(counter++);
      s.arch = plan[i].arch;
      s.latency_ms = it->second->latency_ms;
      s.is_reference = plan[i].ref_index >= 0;
      s.ref_index = plan[i].ref_index;
      s.batch_id = batch_id;
      ds.samples.push_back(std::move(s));
    }
    return;
  }
  std::size_t counter = ds.samples.size();
  for (std::size_t i = 0; i < plan.size(); ++i) {
    Sample s;
    s.id = "s" + std::to_string(counter++);
    s.arch = plan[i].arch;
    s.latency_ms = batch.measured[i].latency_ms;
    s.is_reference = plan[i].ref_index >= 0;
    s.ref_index = plan[i].ref_index;
    s.batch_id = batch_id;
    ds.samples.push_back(std::move(s));
  }
}

// Re-measures every sample of `batch_id` in place (same archs, same ids,
// fresh backend seed).
void remeasure_batch(LatencyDataset& ds, MeasurementBackend& backend,
                     const std::string& batch_id, int runs_per_arch,
                     std::uint64_t seed) {
  std::vector<std::size_t> rows;
  std::vector<ArchConfig> archs;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (ds.samples[i].batch_id == batch_id) {
      rows.push_back(i);
      archs.push_back(ds.samples[i].arch);
    }
  if (rows.empty()) throw Error("unknown batch id '" + batch_id + "'");
  const auto batch = measure_batch(backend, archs, runs_per_arch, seed,
                                   batch_id + "+retry");
  if (batch.measured.size() != rows.size())
    throw BackendError("re-measurement of batch " + batch_id +
                       " lost architectures");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ds.samples[rows[i]].latency_ms = batch.measured[i].latency_ms;
    ds.samples[rows[i]].encoded.reset();
  }
}

}  // namespace

void measure_and_append(LatencyDataset& ds, MeasurementBackend& backend,
                        const std::vector<ArchConfig>& archs,
                        const MeasureOptions& options,
                        const std::string& batch_id, std::uint64_t seed) {
  append_batch(ds, backend, archs, options.runs_per_arch, batch_id, seed);
  if (ds.refs.empty()) return;
  auto history = collect_ref_history(ds);
  if (history.n_batches() < 2) return;  // drift needs a second batch
  QcReport report = qc_check(history, options.qc_threshold);
  int attempt = 0;
  while (!report.pass) {
    if (attempt >= options.qc_max_retries)
      throw QcError("quality control failed after " +
                    std::to_string(options.qc_max_retries) +
                    " re-measurements; outlier batches: " +
                    [&] {
                      std::string joined;
                      for (const auto& b : report.outlier_batches)
                        joined += (joined.empty() ? "" : ", ") + b;
                      return joined;
                    }());
    for (const auto& outlier : report.outlier_batches)
      remeasure_batch(ds, backend, outlier, options.runs_per_arch,
                      derive_seed(seed, "qc-retry", attempt));
    ++attempt;
    report = qc_check(collect_ref_history(ds), options.qc_threshold);
  }
}

LatencyDataset extend_dataset(const LatencyDataset& ds,
                              const std::vector<int>& allocation,
                              MeasurementBackend& backend,
                              const MeasureOptions& options,
                              std::uint64_t seed) {
  if (allocation.size() != static_cast<std::size_t>(ds.bins.n_bins))
    throw ConfigError("allocation size does not match bin count");
  LatencyDataset out = ds;
  out.dataset_version = ds.dataset_version + 1;
  std::vector<ArchConfig> new_archs;
  for (std::size_t b = 0; b < allocation.size(); ++b) {
    if (allocation[b] == 0) continue;
    if (allocation[b] < 0) throw ConfigError("negative allocation");
    auto part = sample_in_bin(ds.spec, allocation[b], ds.bins,
                              static_cast<int>(b), derive_seed(seed, "bin", b));
    new_archs.insert(new_archs.end(), std::make_move_iterator(part.begin()),
                     std::make_move_iterator(part.end()));
  }
  if (new_archs.empty()) return out;  // version bump only

  std::set<std::string> batches;
  for (const auto& s : ds.samples) batches.insert(s.batch_id);
  char batch_id[32];
  std::snprintf(batch_id, sizeof batch_id, "batch-%04zu", batches.size());
  measure_and_append(out, backend, new_archs, options, batch_id,
                     derive_seed(seed, "measure"));
  return out;
}

EsmResult run_esm(const EsmConfig& cfg, const EsmCallbacks& callbacks) {
  using Clock = std::chrono::steady_clock;
  cfg.validate();
  auto backend = make_backend(cfg.backend, cfg.spec);
  const DepthBins bins = make_bins(cfg.spec, cfg.n_bins);
  const MeasureOptions options{cfg.runs_per_arch, cfg.qc_threshold,
                               cfg.qc_max_retries};

  EsmResult result;
  LatencyDataset& ds = result.dataset;
  ds.spec = cfg.spec;
  ds.scheme = cfg.scheme;
  ds.bins = bins;
  ds.backend_id = backend->capabilities().id;
  ds.root_seed = cfg.root_seed;
  if (cfg.n_references > 0)
    ds.refs = sample_random(cfg.spec, cfg.n_references,
                            derive_seed(cfg.root_seed, "refs"));

  // The held-out evaluation set is balanced-sampled and measured exactly
  // once; it never mixes with training batches.
  LatencyDataset& test = result.test_set;
  test.spec = cfg.spec;
  test.scheme = cfg.scheme;
  test.bins = bins;
  test.backend_id = ds.backend_id;
  test.root_seed = cfg.root_seed;
  {
    auto test_archs = sample_balanced(cfg.spec, cfg.test_size, bins,
                                      derive_seed(cfg.root_seed, "test-sample"));
    append_batch(test, *backend, test_archs, cfg.runs_per_arch, "test",
                 derive_seed(cfg.root_seed, "test-measure"));
  }
  const std::size_t test_n = test.samples.size();
  Eigen::MatrixXd test_x(test_n, encoding_length(cfg.spec, cfg.scheme));
  Eigen::VectorXd test_y(test_n);
  std::vector<int> test_bins(test_n);
  for (std::size_t i = 0; i < test_n; ++i) {
    const auto vec = encode(cfg.spec, test.samples[i].arch, cfg.scheme);
    test_x.row(i) = Eigen::Map<const Eigen::VectorXd>(
        vec.values.data(), static_cast<Eigen::Index>(vec.values.size()));
    test_y[i] = test.samples[i].latency_ms;
    test_bins[i] = bin_index(test.samples[i].arch, bins);
  }

  // Iteration 0 dataset.
  {
    auto initial =
        cfg.strategy == SamplingStrategy::Balanced
            ? sample_balanced(cfg.spec, cfg.n_initial, bins,
                              derive_seed(cfg.root_seed, "sample", 0))
            : sample_random(cfg.spec, cfg.n_initial,
                            derive_seed(cfg.root_seed, "sample", 0));
    measure_and_append(ds, *backend, initial, options, "batch-0000",
                       derive_seed(cfg.root_seed, "measure", 0));
  }

  for (int iteration = 0; iteration < cfg.max_iterations; ++iteration) {
    const auto started = Clock::now();
    const auto train_rows = ds.nonref_indices();
    Eigen::MatrixXd train_x(train_rows.size(),
                            encoding_length(cfg.spec, cfg.scheme));
    Eigen::VectorXd train_y(train_rows.size());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      const auto& s = ds.samples[train_rows[i]];
      const auto vec = encode(cfg.spec, s.arch, cfg.scheme);
      train_x.row(i) = Eigen::Map<const Eigen::VectorXd>(
          vec.values.data(), static_cast<Eigen::Index>(vec.values.size()));
      train_y[i] = s.latency_ms;
    }

    // Retrain from scratch with a fresh derived seed each iteration.
    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = derive_seed(cfg.root_seed, "train", iteration);
    result.model = train(train_x, train_y, train_cfg);
    result.model.spec_name = cfg.spec.name;
    result.model.scheme = cfg.scheme;

    const EvalReport report =
        evaluate(result.model, test_x, test_y, test_bins, cfg.n_bins,
                 cfg.eval_strategy, cfg.acc_th);

    IterationRecord record;
    record.iteration = iteration;
    record.dataset_size = train_rows.size();
    record.bin_accuracy = report.per_bin_accuracy;
    record.overall_accuracy = report.overall_accuracy;
    record.pass = report.pass;
    record.train_seed = train_cfg.seed;

    if (!report.pass && iteration + 1 < cfg.max_iterations) {
      if (cfg.strategy == SamplingStrategy::Balanced) {
        record.allocation =
            allocate_extension(report.per_bin_accuracy, cfg.acc_th,
                               cfg.w_below, cfg.w_above, cfg.n_step);
        LatencyDataset extended =
            extend_dataset(ds, record.allocation, *backend, options,
                           derive_seed(cfg.root_seed, "extend", iteration));
        ds = std::move(extended);
      } else {
        auto extra = sample_random(cfg.spec, cfg.n_step,
                                   derive_seed(cfg.root_seed, "sample",
                                               iteration + 1));
        std::set<std::string> batches;
        for (const auto& s : ds.samples) batches.insert(s.batch_id);
        char batch_id[32];
        std::snprintf(batch_id, sizeof batch_id, "batch-%04zu",
                      batches.size());
        measure_and_append(ds, *backend, extra, options, batch_id,
                           derive_seed(cfg.root_seed, "measure",
                                       iteration + 1));
        ds.dataset_version += 1;
        record.allocation.assign(static_cast<std::size_t>(cfg.n_bins), 0);
      }
    }

    record.wall_time_s =
        std::chrono::duration<double>(Clock::now() - started).count();
    result.history.iterations.push_back(record);
    if (callbacks.on_iteration) callbacks.on_iteration(record, report);
    if (report.pass) {
      result.history.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace esm
