#include "esm/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "esm/error.hpp"
#include "esm/rng.hpp"

namespace esm {

double aggregate_latency(std::span<const double> runs) {
  const std::size_t n = runs.size();
  if (n < 5)
    throw ConfigError("aggregate_latency needs at least 5 runs, got " +
                      std::to_string(n));
  std::vector<double> sorted(runs.begin(), runs.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t trim = n / 5;  // floor(0.2 n) per side
  const double sum = std::accumulate(sorted.begin() + trim,
                                     sorted.end() - trim, 0.0);
  return sum / static_cast<double>(n - 2 * trim);
}

void OracleParams::validate() const {
  if (a1 < 0 || a2 < 0 || a3 < 0 || alpha < 0 || gamma < 0 || sigma < 0)
    throw ConfigError("oracle coefficients must be >= 0");
  if (rho < 1) throw ConfigError("oracle rho must be >= 1");
  if (width_ref <= 0) throw ConfigError("oracle width_ref must be > 0");
}

namespace {

struct OracleDims {
  int kernel = -1;            // index into spec.features
  int expansion = -1;
  bool kernel_per_unit = false;
  int kernel_arity_idx = -1;  // position within per-block or per-unit dim list
  int expansion_arity_idx = -1;
};

OracleDims resolve_oracle_dims(const SupernetSpec& spec) {
  OracleDims dims;
  const auto pb = spec.per_block_dims();
  const auto pu = spec.per_unit_dims();
  for (std::size_t i = 0; i < spec.features.size(); ++i) {
    if (spec.features[i].name == "kernel_size") dims.kernel = static_cast<int>(i);
    if (spec.features[i].name == "expansion_ratio")
      dims.expansion = static_cast<int>(i);
  }
  if (dims.kernel < 0)
    throw BackendError("oracle backend requires a feature named 'kernel_size'");
  dims.kernel_per_unit =
      spec.features[dims.kernel].scope == FeatureScope::PerUnit;
  const auto& klist = dims.kernel_per_unit ? pu : pb;
  dims.kernel_arity_idx = static_cast<int>(
      std::find(klist.begin(), klist.end(),
                static_cast<std::size_t>(dims.kernel)) -
      klist.begin());
  if (dims.expansion >= 0) {
    if (spec.features[dims.expansion].scope != FeatureScope::PerBlock)
      throw BackendError("oracle expects expansion_ratio to be per-block");
    dims.expansion_arity_idx = static_cast<int>(
        std::find(pb.begin(), pb.end(),
                  static_cast<std::size_t>(dims.expansion)) -
        pb.begin());
  }
  return dims;
}

}  // namespace

double oracle_mean(const SupernetSpec& spec, const ArchConfig& arch,
                   const OracleParams& params) {
  params.validate();
  validate_arch(spec, arch);
  const OracleDims dims = resolve_oracle_dims(spec);

  double block_cost = 0.0;
  int transitions = 0;
  for (std::size_t u = 0; u < spec.units.size(); ++u) {
    const double s_u = spec.units[u].stage_width
                           ? *spec.units[u].stage_width / params.width_ref
                           : 1.0;
    double prev_kernel = -1.0;
    for (int b = 0; b < arch.unit_depths[u]; ++b) {
      const double k =
          dims.kernel_per_unit
              ? spec.features[dims.kernel]
                    .options[arch.unit_features[u][dims.kernel_arity_idx]]
              : spec.features[dims.kernel]
                    .options[arch.block_features[u][b][dims.kernel_arity_idx]];
      const double e =
          dims.expansion >= 0
              ? spec.features[dims.expansion]
                    .options[arch.block_features[u][b][dims.expansion_arity_idx]]
              : 1.0;
      block_cost += s_u * (params.a1 * k * k + params.a2) * (params.a3 + e);
      if (b > 0 && k != prev_kernel) ++transitions;
      prev_kernel = k;
    }
  }
  const int depth = total_depth(arch);
  const double waves =
      std::ceil(static_cast<double>(depth) / static_cast<double>(params.rho));
  return block_cost + params.alpha * transitions + params.gamma * waves;
}

std::vector<double> oracle_runs(const SupernetSpec& spec,
                                const ArchConfig& arch,
                                const OracleParams& params, int n_runs,
                                std::uint64_t seed) {
  if (n_runs < 1) throw ConfigError("n_runs must be >= 1");
  const double mean = oracle_mean(spec, arch, params);
  std::vector<double> runs(n_runs, mean);
  if (params.sigma > 0) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& r : runs) r = mean * std::exp(params.sigma * gauss(rng));
  }
  return runs;
}

OracleBackend::OracleBackend(SupernetSpec spec, OracleParams params)
    : spec_(std::move(spec)), params_(params) {
  spec_.validate();
  params_.validate();
  resolve_oracle_dims(spec_);  // fail fast on unusable specs
}

BackendCapabilities OracleBackend::capabilities() const {
  return {"oracle:" + spec_.name, true, 0};
}

std::vector<std::vector<double>> OracleBackend::collect(
    const std::vector<ArchConfig>& archs,
    const std::vector<std::string>& arch_ids, int runs_per_arch,
    std::uint64_t seed, const std::string& batch_id) {
  (void)batch_id;
  if (arch_ids.size() != archs.size())
    throw BackendError("arch_ids size mismatch");
  std::vector<std::vector<double>> out;
  out.reserve(archs.size());
  for (std::size_t i = 0; i < archs.size(); ++i)
    out.push_back(oracle_runs(spec_, archs[i], params_, runs_per_arch,
                              derive_seed(seed, "arch", i)));
  return out;
}

BatchResult measure_batch(MeasurementBackend& backend,
                          const std::vector<ArchConfig>& archs,
                          int runs_per_arch, std::uint64_t seed,
                          const std::string& batch_id) {
  if (runs_per_arch < 5)
    throw ConfigError("runs_per_arch must be >= 5 for trimmed aggregation");
  std::vector<std::string> arch_ids(archs.size());
  for (std::size_t i = 0; i < archs.size(); ++i)
    arch_ids[i] = batch_id + "/" + std::to_string(i);

  // Latency is the quantity under measurement: serialize on the backend.
  std::lock_guard<std::mutex> guard(backend.measurement_lock());
  const auto runs = backend.collect(archs, arch_ids, runs_per_arch, seed,
                                    batch_id);
  if (runs.size() != archs.size())
    throw ProtocolError("backend returned " + std::to_string(runs.size()) +
                        " run lists for " + std::to_string(archs.size()) +
                        " archs (batch " + batch_id + ")");

  BatchResult result;
  result.batch_id = batch_id;
  for (std::size_t i = 0; i < archs.size(); ++i) {
    bool valid = !runs[i].empty();
    for (double r : runs[i])
      if (!(r > 0) || !std::isfinite(r)) valid = false;
    if (!valid) {
      result.failures.push_back(
          {arch_ids[i], "non-positive or non-finite latency run"});
      continue;
    }
    result.measured.push_back(
        {archs[i], aggregate_latency(runs[i]), arch_ids[i]});
  }
  return result;
}

std::vector<BatchEntry> inject_references(const std::vector<ArchConfig>& batch,
                                          const std::vector<ArchConfig>& refs) {
  std::vector<BatchEntry> out;
  out.reserve(batch.size() + refs.size());
  for (const auto& arch : batch) out.push_back({arch, -1});
  if (refs.empty()) return out;
  // Even interleaving: ref j goes to the midpoint of stripe j.
  const std::size_t total = batch.size() + refs.size();
  for (std::size_t j = 0; j < refs.size(); ++j) {
    std::size_t pos = (2 * j + 1) * total / (2 * refs.size());
    pos = std::min(pos, out.size());
    out.insert(out.begin() + pos, {refs[j], static_cast<int>(j)});
  }
  return out;
}

QcReport qc_check(const RefHistory& history, double threshold) {
  if (threshold < 0) throw ConfigError("qc threshold must be >= 0");
  QcReport report;
  const std::size_t n_refs = history.n_refs();
  const std::size_t n_batches = history.n_batches();
  if (n_refs == 0) return report;  // nothing to check
  for (const auto& series : history.values)
    if (series.size() != n_batches)
      throw ConfigError("ref history is ragged: every batch must measure "
                        "every reference");
  if (n_batches < 2)
    throw ConfigError("qc_check needs at least 2 batches of reference "
                      "measurements");

  std::vector<bool> retained(n_batches, true);
  auto any_retained = [&] {
    return std::any_of(retained.begin(), retained.end(),
                       [](bool r) { return r; });
  };
  auto ref_mean = [&](std::size_t r) {
    // Falls back to the full-history mean once everything is flagged, so the
    // reported deviation series stays meaningful.
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < n_batches; ++b)
      if (retained[b]) {
        sum += history.values[r][b];
        ++count;
      }
    if (count == 0) {
      for (double v : history.values[r]) sum += v;
      count = n_batches;
    }
    return sum / static_cast<double>(count);
  };

  // Remove outliers and recompute means until the retained set is clean.
  // The boundary is inclusive; the tiny slack keeps exactly-at-threshold
  // readings from flipping on representation noise.
  const double cutoff = threshold + 1e-12;
  bool changed = true;
  while (changed && any_retained()) {
    changed = false;
    for (std::size_t r = 0; r < n_refs && !changed; ++r) {
      const double mean = ref_mean(r);
      if (mean <= 0)
        throw ConfigError("non-positive reference measurement mean");
      for (std::size_t b = 0; b < n_batches; ++b) {
        if (!retained[b]) continue;
        const double dev = std::abs(history.values[r][b] - mean) / mean;
        if (dev > cutoff) {
          retained[b] = false;
          changed = true;
        }
      }
    }
  }

  report.deviations.assign(n_refs, std::vector<double>(n_batches, 0.0));
  for (std::size_t r = 0; r < n_refs; ++r) {
    const double mean = ref_mean(r);
    for (std::size_t b = 0; b < n_batches; ++b)
      report.deviations[r][b] =
          mean > 0 ? std::abs(history.values[r][b] - mean) / mean : 0.0;
  }
  for (std::size_t b = 0; b < n_batches; ++b)
    if (!retained[b]) report.outlier_batches.push_back(history.batch_ids[b]);
  report.pass = report.outlier_batches.empty();
  return report;
}

}  // namespace esm
