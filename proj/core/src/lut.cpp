#include "esm/lut.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>

#include "esm/error.hpp"
#include "esm/jsonio.hpp"
#include "esm/version.hpp"
#include "record_io.hpp"

namespace esm {

std::size_t lut_combo_count(const SupernetSpec& spec) {
  std::size_t n = 1;
  for (const auto& dim : spec.features) n *= dim.options.size();
  return n;
}

std::size_t lut_combo_index(const SupernetSpec& spec, const ArchConfig& arch,
                            std::size_t unit, int block) {
  const auto pb = spec.per_block_dims();
  const auto pu = spec.per_unit_dims();
  std::size_t idx = 0;
  std::size_t pb_seen = 0, pu_seen = 0;
  for (std::size_t f = 0; f < spec.features.size(); ++f) {
    const int choice =
        spec.features[f].scope == FeatureScope::PerBlock
            ? arch.block_features[unit][block][pb_seen++]
            : arch.unit_features[unit][pu_seen++];
    idx = idx * spec.features[f].options.size() + choice;
  }
  (void)pb;
  (void)pu;
  return idx;
}

namespace {

// Decomposes a combo index back into per-dim option choices.
std::vector<int> combo_choices(const SupernetSpec& spec, std::size_t combo) {
  std::vector<int> choices(spec.features.size(), 0);
  for (std::size_t f = spec.features.size(); f-- > 0;) {
    const std::size_t n = spec.features[f].options.size();
    choices[f] = static_cast<int>(combo % n);
    combo /= n;
  }
  return choices;
}

ArchConfig minimum_arch(const SupernetSpec& spec) {
  ArchConfig arch;
  arch.spec_name = spec.name;
  const auto pb = spec.per_block_dims();
  const auto pu = spec.per_unit_dims();
  for (const auto& unit : spec.units) {
    arch.unit_depths.push_back(unit.min_depth());
    arch.block_features.push_back(std::vector<std::vector<int>>(
        unit.min_depth(), std::vector<int>(pb.size(), 0)));
    arch.unit_features.push_back(std::vector<int>(pu.size(), 0));
  }
  return arch;
}

// Minimum arch with unit u's per-unit dims set per `choices` and, when
// add_block, one extra block with the per-block choices appended to unit u.
ArchConfig probe_arch(const SupernetSpec& spec, std::size_t u,
                      const std::vector<int>& choices, bool add_block,
                      int probe_depth) {
  ArchConfig arch = minimum_arch(spec);
  const auto pb = spec.per_block_dims();
  const auto pu = spec.per_unit_dims();
  for (std::size_t i = 0; i < pu.size(); ++i)
    arch.unit_features[u][i] = choices[pu[i]];
  if (add_block) {
    std::vector<int> row(pb.size());
    for (std::size_t i = 0; i < pb.size(); ++i) row[i] = choices[pb[i]];
    arch.unit_depths[u] = probe_depth;
    while (arch.block_features[u].size() <
           static_cast<std::size_t>(probe_depth))
      arch.block_features[u].push_back(row);
  }
  return arch;
}

}  // namespace

LatencyLut build_lut(const SupernetSpec& spec, MeasurementBackend& backend,
                     int runs_per_arch, std::uint64_t seed) {
  spec.validate();
  const std::size_t n_units = spec.units.size();
  const std::size_t n_combos = lut_combo_count(spec);

  // Probe depths: the next depth option above the unit minimum. The entry is
  // the per-block increment, so divide by the depth delta when it is not 1.
  std::vector<int> probe_depth(n_units);
  for (std::size_t u = 0; u < n_units; ++u) {
    const auto& opts = spec.units[u].depth_options;
    if (opts.size() < 2)
      throw ConfigError("unit " + std::to_string(u) +
                        " has a fixed depth; cannot difference a LUT entry");
    probe_depth[u] = opts[1];
  }

  // Collect unique probe architectures. Serialize archs as keys to dedupe
  // baselines shared across combos.
  std::vector<ArchConfig> archs;
  std::map<std::string, std::size_t> index_of;
  auto intern = [&](const ArchConfig& arch) {
    const std::string key = Json(arch).dump();
    auto it = index_of.find(key);
    if (it != index_of.end()) return it->second;
    archs.push_back(arch);
    index_of.emplace(key, archs.size() - 1);
    return archs.size() - 1;
  };

  const std::size_t min_idx = intern(minimum_arch(spec));
  std::vector<std::vector<std::size_t>> probe_idx(
      n_units, std::vector<std::size_t>(n_combos));
  std::vector<std::vector<std::size_t>> base_idx(
      n_units, std::vector<std::size_t>(n_combos));
  for (std::size_t u = 0; u < n_units; ++u) {
    for (std::size_t c = 0; c < n_combos; ++c) {
      const auto choices = combo_choices(spec, c);
      base_idx[u][c] = intern(probe_arch(spec, u, choices, false, 0));
      probe_idx[u][c] =
          intern(probe_arch(spec, u, choices, true, probe_depth[u]));
    }
  }

  const auto batch =
      measure_batch(backend, archs, runs_per_arch, seed, "lut-build");
  if (!batch.failures.empty())
    throw BackendError("LUT profiling failed for " +
                       std::to_string(batch.failures.size()) +
                       " probe archs, first: " + batch.failures.front().arch_id +
                       " (" + batch.failures.front().reason + ")");
  std::vector<double> latency(archs.size());
  for (std::size_t i = 0; i < batch.measured.size(); ++i)
    latency[i] = batch.measured[i].latency_ms;

  LatencyLut lut;
  lut.spec_name = spec.name;
  lut.entries.assign(n_units, std::vector<double>(n_combos, 0.0));
  for (std::size_t u = 0; u < n_units; ++u) {
    const int delta = probe_depth[u] - spec.units[u].min_depth();
    for (std::size_t c = 0; c < n_combos; ++c) {
      double entry = (latency[probe_idx[u][c]] - latency[base_idx[u][c]]) /
                     static_cast<double>(delta);
      if (entry < 0) {
        lut.clamped.push_back("unit " + std::to_string(u) + " combo " +
                              std::to_string(c));
        entry = 0;
      }
      lut.entries[u][c] = entry;
    }
  }
  if (!lut.clamped.empty())
    std::cerr << "[esm] warning: " << lut.clamped.size()
              << " LUT entries clamped to 0 (negative increments)\n";

  // The minimum arch's own blocks sit at combo index of all-first options
  // given its per-unit selections are all first: combo 0 per unit.
  double own = 0.0;
  for (std::size_t u = 0; u < n_units; ++u)
    own += spec.units[u].min_depth() * lut.entries[u][0];
  lut.c0 = latency[min_idx] - own;
  return lut;
}

double lut_predict(const LatencyLut& lut, const SupernetSpec& spec,
                   const ArchConfig& arch) {
  validate_arch(spec, arch);
  if (lut.entries.size() != spec.units.size() ||
      lut.combos_per_unit() != lut_combo_count(spec))
    throw SchemaError("LUT shape does not match spec '" + spec.name + "'");
  double total = lut.c0;
  for (std::size_t u = 0; u < spec.units.size(); ++u)
    for (int b = 0; b < arch.unit_depths[u]; ++b) {
      const std::size_t combo = lut_combo_index(spec, arch, u, b);
      if (combo >= lut.entries[u].size())
        throw SchemaError("combination missing from LUT");
      total += lut.entries[u][combo];
    }
  return total;
}

std::vector<double> lut_predict_batch(const LatencyLut& lut,
                                      const SupernetSpec& spec,
                                      const std::vector<ArchConfig>& archs) {
  std::vector<double> out;
  out.reserve(archs.size());
  for (const auto& arch : archs) out.push_back(lut_predict(lut, spec, arch));
  return out;
}

BiasCorrection fit_bias(const std::vector<double>& lut_predictions,
                        const std::vector<double>& actual) {
  const std::size_t n = lut_predictions.size();
  if (n < 2 || actual.size() != n)
    throw ConfigError("bias fit needs >= 2 aligned calibration points");
  double mean_x = 0, mean_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_x += lut_predictions[i];
    mean_y += actual[i];
  }
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);
  double cov = 0, var = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = lut_predictions[i] - mean_x;
    cov += dx * (actual[i] - mean_y);
    var += dx * dx;
  }
  if (var == 0)
    throw ConfigError("bias fit is degenerate: all LUT predictions equal");
  BiasCorrection bias;
  bias.slope = cov / var;
  bias.intercept = mean_y - bias.slope * mean_x;
  return bias;
}

void save_lut(const LatencyLut& lut, const std::filesystem::path& path) {
  detail::RecordWriter writer(path);
  writer.write(Json{{"type", "header"},
                    {"format_version", kFormatVersion},
                    {"kind", "lut"},
                    {"spec_name", lut.spec_name},
                    {"c0", lut.c0},
                    {"clamped", lut.clamped}});
  for (std::size_t u = 0; u < lut.entries.size(); ++u)
    writer.write(
        Json{{"type", "unit_entries"}, {"unit", u}, {"values", lut.entries[u]}});
  writer.finish();
}

LatencyLut load_lut(const std::filesystem::path& path) {
  detail::RecordReader reader(path);
  const Json& header = reader.header("lut");
  check_keys(header,
             {"type", "format_version", "kind", "spec_name", "c0", "clamped"},
             {}, "lut header");
  LatencyLut lut;
  header.at("spec_name").get_to(lut.spec_name);
  header.at("c0").get_to(lut.c0);
  header.at("clamped").get_to(lut.clamped);
  for (const Json& record : reader.body()) {
    if (record.value("type", "") != "unit_entries")
      throw SchemaError("unexpected record in LUT file");
    check_keys(record, {"type", "unit", "values"}, {}, "lut record");
    if (record.at("unit").get<std::size_t>() != lut.entries.size())
      throw SchemaError("LUT units out of order");
    lut.entries.push_back(record.at("values").get<std::vector<double>>());
  }
  if (lut.entries.empty()) throw SchemaError("LUT file has no entries");
  return lut;
}

}  // namespace esm
