#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "esm/archspace.hpp"

namespace esm {

// Trimmed mean: drop the fastest and slowest floor(0.2*n) runs, average the
// rest. n=150 gives the 30/90/30 split. Requires n >= 5.
double aggregate_latency(std::span<const double> runs);

// Synthetic latency law standing in for hardware. The per-block term is
// additive; alpha prices kernel changes between adjacent blocks of a unit
// and gamma prices depth in waves of rho blocks, so the law is deliberately
// not representable by a per-block lookup table unless alpha=gamma=0.
struct OracleParams {
  double a1 = 0.002;       // cost per squared kernel tap
  double a2 = 0.05;        // fixed per-block cost
  double a3 = 0.5;         // expansion-ratio offset
  double alpha = 0.12;     // kernel-transition overhead (ms)
  double gamma = 0.3;      // wave-quantization step cost (ms)
  int rho = 4;             // wave width (blocks)
  double sigma = 0.01;     // multiplicative log-normal noise scale
  double width_ref = 256;  // channel normalization constant

  void validate() const;
};

double oracle_mean(const SupernetSpec& spec, const ArchConfig& arch,
                   const OracleParams& params);

std::vector<double> oracle_runs(const SupernetSpec& spec,
                                const ArchConfig& arch,
                                const OracleParams& params, int n_runs,
                                std::uint64_t seed);

struct BackendCapabilities {
  std::string id;
  bool deterministic = false;
  int max_runs_per_arch = 0;  // 0 = unlimited
};

// Produces raw per-inference latencies for a batch of architectures.
// Implementations raise BackendError (or a subtype) on failure.
class MeasurementBackend {
 public:
  virtual ~MeasurementBackend() = default;
  virtual BackendCapabilities capabilities() const = 0;
  // One run list per arch, aligned with `archs`. arch_ids name the archs in
  // protocol exchanges and error messages.
  virtual std::vector<std::vector<double>> collect(
      const std::vector<ArchConfig>& archs,
      const std::vector<std::string>& arch_ids, int runs_per_arch,
      std::uint64_t seed, const std::string& batch_id) = 0;

  std::mutex& measurement_lock() { return lock_; }

 private:
  std::mutex lock_;  // one measurement in flight per backend
};

class OracleBackend final : public MeasurementBackend {
 public:
  OracleBackend(SupernetSpec spec, OracleParams params);
  BackendCapabilities capabilities() const override;
  std::vector<std::vector<double>> collect(
      const std::vector<ArchConfig>& archs,
      const std::vector<std::string>& arch_ids, int runs_per_arch,
      std::uint64_t seed, const std::string& batch_id) override;

  const OracleParams& params() const { return params_; }

 private:
  SupernetSpec spec_;
  OracleParams params_;
};

struct ExternalBackendOptions {
  std::string command;      // run through /bin/sh -c
  double timeout_s = 600;   // per batch
};

// Drives a user-supplied measurement command. Request and response are one
// JSON document per line on stdin/stdout; see docs/formats.md.
class ExternalBackend final : public MeasurementBackend {
 public:
  explicit ExternalBackend(ExternalBackendOptions options);
  BackendCapabilities capabilities() const override;
  std::vector<std::vector<double>> collect(
      const std::vector<ArchConfig>& archs,
      const std::vector<std::string>& arch_ids, int runs_per_arch,
      std::uint64_t seed, const std::string& batch_id) override;

 private:
  ExternalBackendOptions options_;
};

struct MeasuredArch {
  ArchConfig arch;
  double latency_ms = 0;
  std::string arch_id;
};

struct BatchFailure {
  std::string arch_id;
  std::string reason;
};

struct BatchResult {
  std::string batch_id;
  std::vector<MeasuredArch> measured;
  std::vector<BatchFailure> failures;
};

// Measures every arch (150 runs each by default) and aggregates. Per-arch
// value failures are recorded and the arch excluded; protocol and transport
// failures abort the batch.
BatchResult measure_batch(MeasurementBackend& backend,
                          const std::vector<ArchConfig>& archs,
                          int runs_per_arch, std::uint64_t seed,
                          const std::string& batch_id);

struct BatchEntry {
  ArchConfig arch;
  int ref_index = -1;  // >= 0 marks a reference model
};

// Interleaves the fixed reference models evenly into a batch. References are
// re-measured in every batch to expose drift; they never enter training data.
std::vector<BatchEntry> inject_references(const std::vector<ArchConfig>& batch,
                                          const std::vector<ArchConfig>& refs);

// Aggregated reference measurements across batches: values[ref][batch].
struct RefHistory {
  std::vector<std::string> batch_ids;
  std::vector<std::vector<double>> values;

  std::size_t n_refs() const { return values.size(); }
  std::size_t n_batches() const { return batch_ids.size(); }
};

struct QcReport {
  // deviations[ref][batch]: relative deviation from that reference's mean
  // over retained (non-outlier) batches.
  std::vector<std::vector<double>> deviations;
  std::vector<std::string> outlier_batches;
  bool pass = true;
};

// Flags batches whose reference measurements deviate more than `threshold`
// (inclusive boundary: exactly threshold passes) from the per-reference
// running mean. Outliers are removed and means recomputed until stable.
QcReport qc_check(const RefHistory& history, double threshold = 0.03);

}  // namespace esm
