#include "esm/encoding.hpp"

#include <cmath>
#include <numeric>

#include "esm/error.hpp"

namespace esm {

std::string to_string(EncodingScheme scheme) {
  switch (scheme) {
    case EncodingScheme::Fcc: return "fcc";
    case EncodingScheme::FeatureCount: return "fc";
    case EncodingScheme::Statistical: return "statistical";
    case EncodingScheme::Feature: return "feature";
    case EncodingScheme::OneHot: return "onehot";
  }
  throw Error("unreachable scheme");
}

EncodingScheme parse_scheme(std::string_view tag) {
  if (tag == "fcc") return EncodingScheme::Fcc;
  if (tag == "fc" || tag == "feature_count") return EncodingScheme::FeatureCount;
  if (tag == "statistical") return EncodingScheme::Statistical;
  if (tag == "feature") return EncodingScheme::Feature;
  if (tag == "onehot" || tag == "one_hot") return EncodingScheme::OneHot;
  throw SchemaError("unknown encoding scheme tag '" + std::string(tag) +
                    "' (expected fcc|fc|statistical|feature|onehot)");
}

std::size_t per_block_combo_count(const SupernetSpec& spec) {
  std::size_t n = 1;  // empty product: one degenerate combination
  for (auto i : spec.per_block_dims()) n *= spec.features[i].options.size();
  return n;
}

std::size_t per_block_combo_index(const SupernetSpec& spec,
                                  const std::vector<int>& option_indices) {
  const auto pb = spec.per_block_dims();
  if (option_indices.size() != pb.size())
    throw SchemaError("combo arity mismatch");
  std::size_t idx = 0;
  for (std::size_t i = 0; i < pb.size(); ++i)
    idx = idx * spec.features[pb[i]].options.size() + option_indices[i];
  return idx;
}

namespace {

std::size_t per_unit_slot_count(const SupernetSpec& spec) {
  std::size_t n = 0;
  for (auto i : spec.per_unit_dims()) n += spec.features[i].options.size();
  return n;
}

std::size_t per_unit_value_count(const SupernetSpec& spec) {
  return spec.per_unit_dims().size();
}

}  // namespace

std::size_t encoding_length(const SupernetSpec& spec, EncodingScheme scheme) {
  spec.validate();
  const auto pb = spec.per_block_dims();
  const std::size_t k = spec.units.size();
  switch (scheme) {
    case EncodingScheme::Fcc:
      return k * (per_block_combo_count(spec) + per_unit_slot_count(spec));
    case EncodingScheme::FeatureCount: {
      std::size_t per_unit = 0;
      for (const auto& dim : spec.features) per_unit += dim.options.size();
      return k * per_unit;
    }
    case EncodingScheme::Statistical:
      // depth, then (mean, std) per per-block dim, then raw per-unit values
      return k * (1 + 2 * pb.size() + per_unit_value_count(spec));
    case EncodingScheme::Feature: {
      std::size_t total = 0;
      for (const auto& unit : spec.units)
        total += unit.max_depth() * pb.size() + per_unit_value_count(spec);
      return total;
    }
    case EncodingScheme::OneHot: {
      std::size_t per_slot = 1;  // active bit
      for (auto i : pb) per_slot += spec.features[i].options.size();
      std::size_t total = 0;
      for (const auto& unit : spec.units)
        total += unit.max_depth() * per_slot + per_unit_slot_count(spec);
      return total;
    }
  }
  throw Error("unreachable scheme");
}

namespace {

void emit_fcc(const SupernetSpec& spec, const ArchConfig& arch,
              std::vector<double>& out) {
  const auto pu = spec.per_unit_dims();
  const std::size_t combos = per_block_combo_count(spec);
  for (std::size_t u = 0; u < spec.units.size(); ++u) {
    const std::size_t base = out.size();
    out.resize(base + combos, 0.0);
    for (const auto& row : arch.block_features[u])
      out[base + per_block_combo_index(spec, row)] += 1.0;
    for (std::size_t i = 0; i < pu.size(); ++i) {
      const std::size_t slot_base = out.size();
      out.resize(slot_base + spec.features[pu[i]].options.size(), 0.0);
      out[slot_base + arch.unit_features[u][i]] = arch.unit_depths[u];
    }
  }
}

void emit_feature_count(const SupernetSpec& spec, const ArchConfig& arch,
                        std::vector<double>& out) {
  for (std::size_t u = 0; u < spec.units.size(); ++u) {
    std::size_t pb_seen = 0, pu_seen = 0;
    for (std::size_t f = 0; f < spec.features.size(); ++f) {
      const std::size_t base = out.size();
      out.resize(base + spec.features[f].options.size(), 0.0);
      if (spec.features[f].scope == FeatureScope::PerBlock) {
        for (const auto& row : arch.block_features[u])
          out[base + row[pb_seen]] += 1.0;
        ++pb_seen;
      } else {
        out[base + arch.unit_features[u][pu_seen]] = arch.unit_depths[u];
        ++pu_seen;
      }
    }
  }
}

void emit_statistical(const SupernetSpec& spec, const ArchConfig& arch,
                      std::vector<double>& out) {
  const auto pb = spec.per_block_dims();
  const auto pu = spec.per_unit_dims();
  for (std::size_t u = 0; u < spec.units.size(); ++u) {
    const int depth = arch.unit_depths[u];
    out.push_back(depth);
    for (std::size_t i = 0; i < pb.size(); ++i) {
      const auto& options = spec.features[pb[i]].options;
      double sum = 0.0, sum_sq = 0.0;
      for (const auto& row : arch.block_features[u]) {
        const double v = options[row[i]];
        sum += v;
        sum_sq += v * v;
      }
      const double mean = sum / depth;
      const double var = std::max(0.0, sum_sq / depth - mean * mean);
      out.push_back(mean);
      out.push_back(std::sqrt(var));  // population std: defined for depth 1
    }
    for (std::size_t i = 0; i < pu.size(); ++i)
      out.push_back(spec.features[pu[i]].options[arch.unit_features[u][i]]);
  }
}

void emit_feature(const SupernetSpec& spec, const ArchConfig& arch,
                  std::vector<double>& out) {
  const auto pb = spec.per_block_dims();
  const auto pu = spec.per_unit_dims();
  for (std::size_t u = 0; u < spec.units.size(); ++u) {
    const int max_depth = spec.units[u].max_depth();
    const int depth = arch.unit_depths[u];
    for (int b = 0; b < max_depth; ++b)
      for (std::size_t i = 0; i < pb.size(); ++i)
        out.push_back(b < depth ? spec.features[pb[i]]
                                      .options[arch.block_features[u][b][i]]
                                : 0.0);
    for (std::size_t i = 0; i < pu.size(); ++i)
      out.push_back(spec.features[pu[i]].options[arch.unit_features[u][i]]);
  }
}

void emit_one_hot(const SupernetSpec& spec, const ArchConfig& arch,
                  std::vector<double>& out) {
  const auto pb = spec.per_block_dims();
  const auto pu = spec.per_unit_dims();
  for (std::size_t u = 0; u < spec.units.size(); ++u) {
    const int max_depth = spec.units[u].max_depth();
    const int depth = arch.unit_depths[u];
    for (int b = 0; b < max_depth; ++b) {
      const bool active = b < depth;
      out.push_back(active ? 1.0 : 0.0);
      for (std::size_t i = 0; i < pb.size(); ++i) {
        const std::size_t base = out.size();
        out.resize(base + spec.features[pb[i]].options.size(), 0.0);
        if (active) out[base + arch.block_features[u][b][i]] = 1.0;
      }
    }
    for (std::size_t i = 0; i < pu.size(); ++i) {
      const std::size_t base = out.size();
      out.resize(base + spec.features[pu[i]].options.size(), 0.0);
      out[base + arch.unit_features[u][i]] = 1.0;
    }
  }
}

}  // namespace

EncodedVector encode(const SupernetSpec& spec, const ArchConfig& arch,
                     EncodingScheme scheme) {
  validate_arch(spec, arch);
  EncodedVector vec;
  vec.scheme = scheme;
  vec.spec_name = spec.name;
  vec.values.reserve(encoding_length(spec, scheme));
  switch (scheme) {
    case EncodingScheme::Fcc: emit_fcc(spec, arch, vec.values); break;
    case EncodingScheme::FeatureCount:
      emit_feature_count(spec, arch, vec.values);
      break;
    case EncodingScheme::Statistical:
      emit_statistical(spec, arch, vec.values);
      break;
    case EncodingScheme::Feature: emit_feature(spec, arch, vec.values); break;
    case EncodingScheme::OneHot: emit_one_hot(spec, arch, vec.values); break;
  }
  return vec;
}

ArchConfig decode_one_hot(const SupernetSpec& spec, const EncodedVector& vec) {
  if (vec.scheme != EncodingScheme::OneHot)
    throw SchemaError("decode_one_hot requires a onehot vector");
  if (vec.values.size() != encoding_length(spec, EncodingScheme::OneHot))
    throw SchemaError("onehot vector length mismatch");
  const auto pb = spec.per_block_dims();
  const auto pu = spec.per_unit_dims();
  auto take_one_hot = [&](std::size_t base, std::size_t n,
                          bool allow_empty) -> int {
    int hot = -1;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = vec.values[base + i];
      if (v == 1.0) {
        if (hot >= 0) throw SchemaError("multiple hot slots in one-hot group");
        hot = static_cast<int>(i);
      } else if (v != 0.0) {
        throw SchemaError("one-hot value is neither 0 nor 1");
      }
    }
    if (hot < 0 && !allow_empty)
      throw SchemaError("missing hot slot in one-hot group");
    return hot;
  };

  ArchConfig arch;
  arch.spec_name = spec.name;
  arch.unit_depths.resize(spec.units.size());
  arch.block_features.resize(spec.units.size());
  arch.unit_features.resize(spec.units.size());
  std::size_t pos = 0;
  for (std::size_t u = 0; u < spec.units.size(); ++u) {
    const int max_depth = spec.units[u].max_depth();
    int depth = 0;
    bool seen_inactive = false;
    std::vector<std::vector<int>> rows;
    for (int b = 0; b < max_depth; ++b) {
      const double active = vec.values[pos++];
      if (active != 0.0 && active != 1.0)
        throw SchemaError("active bit is neither 0 nor 1");
      if (active == 1.0 && seen_inactive)
        throw SchemaError("active slot after inactive slot in unit " +
                          std::to_string(u));
      std::vector<int> row(pb.size());
      for (std::size_t i = 0; i < pb.size(); ++i) {
        const std::size_t n = spec.features[pb[i]].options.size();
        row[i] = take_one_hot(pos, n, active == 0.0);
        if (active == 0.0 && row[i] >= 0)
          throw SchemaError("feature bits set in inactive slot");
        pos += n;
      }
      if (active == 1.0) {
        ++depth;
        rows.push_back(std::move(row));
      } else {
        seen_inactive = true;
      }
    }
    arch.unit_depths[u] = depth;
    arch.block_features[u] = std::move(rows);
    arch.unit_features[u].resize(pu.size());
    for (std::size_t i = 0; i < pu.size(); ++i) {
      const std::size_t n = spec.features[pu[i]].options.size();
      arch.unit_features[u][i] = take_one_hot(pos, n, false);
      pos += n;
    }
  }
  validate_arch(spec, arch);
  return arch;
}

}  // namespace esm
