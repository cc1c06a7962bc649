#include "esm/archspace.hpp"

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <cmath>
#include <sstream>

#include "esm/error.hpp"

namespace esm {

std::string to_string(FeatureScope scope) {
  return scope == FeatureScope::PerBlock ? "per_block" : "per_unit";
}

FeatureScope parse_scope(std::string_view text) {
  if (text == "per_block") return FeatureScope::PerBlock;
  if (text == "per_unit") return FeatureScope::PerUnit;
  throw SchemaError("unknown feature scope '" + std::string(text) +
                    "' (expected per_block or per_unit)");
}

void SupernetSpec::validate() const {
  if (name.empty()) throw SchemaError("spec name must not be empty");
  if (units.empty()) throw SchemaError("spec '" + name + "' has no units");
  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto& unit = units[u];
    const std::string where = "spec '" + name + "' unit " + std::to_string(u);
    if (unit.depth_options.empty())
      throw SchemaError(where + ": empty depth_options");
    if (!std::is_sorted(unit.depth_options.begin(), unit.depth_options.end()))
      throw SchemaError(where + ": depth_options must be ascending");
    if (std::adjacent_find(unit.depth_options.begin(),
                           unit.depth_options.end()) !=
        unit.depth_options.end())
      throw SchemaError(where + ": duplicate depth option");
    if (unit.depth_options.front() < 1)
      throw SchemaError(where + ": depth options must be positive");
    if (unit.stage_width && *unit.stage_width <= 0)
      throw SchemaError(where + ": stage_width must be positive");
  }
  for (const auto& dim : features) {
    const std::string where = "spec '" + name + "' feature '" + dim.name + "'";
    if (dim.name.empty())
      throw SchemaError("spec '" + name + "': feature with empty name");
    if (dim.options.empty()) throw SchemaError(where + ": no options");
    for (double v : dim.options)
      if (!std::isfinite(v)) throw SchemaError(where + ": non-finite option");
    auto sorted = dim.options;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw SchemaError(where + ": duplicate option value");
  }
}

std::vector<std::size_t> SupernetSpec::per_block_dims() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < features.size(); ++i)
    if (features[i].scope == FeatureScope::PerBlock) out.push_back(i);
  return out;
}

std::vector<std::size_t> SupernetSpec::per_unit_dims() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < features.size(); ++i)
    if (features[i].scope == FeatureScope::PerUnit) out.push_back(i);
  return out;
}

int SupernetSpec::min_total_depth() const {
  int total = 0;
  for (const auto& u : units) total += u.min_depth();
  return total;
}

int SupernetSpec::max_total_depth() const {
  int total = 0;
  for (const auto& u : units) total += u.max_depth();
  return total;
}

void validate_arch(const SupernetSpec& spec, const ArchConfig& arch) {
  if (!arch.spec_name.empty() && arch.spec_name != spec.name)
    throw SchemaError("arch belongs to spec '" + arch.spec_name +
                      "', not '" + spec.name + "'");
  const auto pb = spec.per_block_dims();
  const auto pu = spec.per_unit_dims();
  if (arch.unit_depths.size() != spec.units.size() ||
      arch.block_features.size() != spec.units.size() ||
      arch.unit_features.size() != spec.units.size())
    throw SchemaError("arch unit count does not match spec '" + spec.name + "'");
  for (std::size_t u = 0; u < spec.units.size(); ++u) {
    const auto& opts = spec.units[u].depth_options;
    const int d = arch.unit_depths[u];
    if (std::find(opts.begin(), opts.end(), d) == opts.end())
      throw SchemaError("unit " + std::to_string(u) + ": depth " +
                        std::to_string(d) + " not in depth_options");
    if (arch.block_features[u].size() != static_cast<std::size_t>(d))
      throw SchemaError("unit " + std::to_string(u) +
                        ": block feature rows != depth");
    for (const auto& row : arch.block_features[u]) {
      if (row.size() != pb.size())
        throw SchemaError("unit " + std::to_string(u) +
                          ": per-block feature arity mismatch");
      for (std::size_t i = 0; i < pb.size(); ++i)
        if (row[i] < 0 || static_cast<std::size_t>(row[i]) >=
                              spec.features[pb[i]].options.size())
          throw SchemaError("unit " + std::to_string(u) +
                            ": option index out of range for feature '" +
                            spec.features[pb[i]].name + "'");
    }
    if (arch.unit_features[u].size() != pu.size())
      throw SchemaError("unit " + std::to_string(u) +
                        ": per-unit feature arity mismatch");
    for (std::size_t i = 0; i < pu.size(); ++i)
      if (arch.unit_features[u][i] < 0 ||
          static_cast<std::size_t>(arch.unit_features[u][i]) >=
              spec.features[pu[i]].options.size())
        throw SchemaError("unit " + std::to_string(u) +
                          ": option index out of range for feature '" +
                          spec.features[pu[i]].name + "'");
  }
}

BigInt space_size(const SupernetSpec& spec) {
  spec.validate();
  const auto pb = spec.per_block_dims();
  const auto pu = spec.per_unit_dims();
  BigInt per_block_combos = 1;
  for (auto i : pb) per_block_combos *= BigInt(spec.features[i].options.size());
  BigInt per_unit_combos = 1;
  for (auto i : pu) per_unit_combos *= BigInt(spec.features[i].options.size());

  BigInt total = 1;
  for (const auto& unit : spec.units) {
    BigInt unit_count = 0;
    for (int d : unit.depth_options)
      unit_count += boost::multiprecision::pow(per_block_combos, d);
    total *= unit_count * per_unit_combos;
  }
  return total;
}

std::string format_scientific(const BigInt& value) {
  const std::string digits = value.str();
  if (digits.size() <= 3) return digits;  // small enough to print exactly
  const int exponent = static_cast<int>(digits.size()) - 1;
  // Round to three significant digits.
  long mantissa3 = std::stol(digits.substr(0, 4));
  mantissa3 = (mantissa3 + 5) / 10;
  std::string m = std::to_string(mantissa3);
  int exp = exponent;
  if (m.size() == 4) {  // rounding carried, e.g. 9.995 -> 10.0
    m = m.substr(0, 3);
    ++exp;
  }
  std::ostringstream os;
  os << m[0] << '.' << m.substr(1) << 'e' << exp;
  return os.str();
}

int total_depth(const ArchConfig& arch) {
  int total = 0;
  for (int d : arch.unit_depths) total += d;
  return total;
}

DepthBins make_bins(const SupernetSpec& spec, int n_bins) {
  spec.validate();
  if (n_bins < 1) throw ConfigError("n_bins must be >= 1");
  const int lo = spec.min_total_depth();
  const int hi = spec.max_total_depth();
  if (lo == hi) {
    if (n_bins != 1)
      throw ConfigError("spec has a single total depth; only n_bins=1 fits");
    return DepthBins{1, {lo, hi}};
  }
  // Edges are integers, so at most hi-lo distinct bins exist.
  if (n_bins > hi - lo)
    throw ConfigError("n_bins=" + std::to_string(n_bins) +
                      " exceeds the " + std::to_string(hi - lo + 1) +
                      " distinct totals of range [" + std::to_string(lo) +
                      ", " + std::to_string(hi) + "]");
  const int width = (hi - lo) / n_bins;
  DepthBins bins;
  bins.n_bins = n_bins;
  bins.edges.resize(n_bins + 1);
  for (int i = 0; i < n_bins; ++i) bins.edges[i] = lo + i * width;
  bins.edges[n_bins] = hi;  // last bin absorbs the rounding remainder
  return bins;
}

int bin_index(int total, const DepthBins& bins) {
  if (total < bins.edges.front() || total > bins.edges.back())
    throw SchemaError("total depth " + std::to_string(total) +
                      " outside bin range [" +
                      std::to_string(bins.edges.front()) + ", " +
                      std::to_string(bins.edges.back()) + "]");
  if (total == bins.edges.back()) return bins.n_bins - 1;
  auto it = std::upper_bound(bins.edges.begin(), bins.edges.end(), total);
  return static_cast<int>(it - bins.edges.begin()) - 1;
}

int bin_index(const ArchConfig& arch, const DepthBins& bins) {
  return bin_index(total_depth(arch), bins);
}

namespace {

// Draws features for an already-chosen depth assignment. The draw order is
// fixed (unit, then blocks, then per-unit dims) so streams are reproducible.
ArchConfig finish_arch(const SupernetSpec& spec, std::vector<int> depths,
                       const std::vector<std::size_t>& pb,
                       const std::vector<std::size_t>& pu, Rng& rng) {
  ArchConfig arch;
  arch.spec_name = spec.name;
  arch.unit_depths = std::move(depths);
  arch.block_features.resize(spec.units.size());
  arch.unit_features.resize(spec.units.size());
  for (std::size_t u = 0; u < spec.units.size(); ++u) {
    arch.block_features[u].resize(arch.unit_depths[u]);
    for (auto& row : arch.block_features[u]) {
      row.resize(pb.size());
      for (std::size_t i = 0; i < pb.size(); ++i)
        row[i] = static_cast<int>(
            uniform_index(rng, spec.features[pb[i]].options.size()));
    }
    arch.unit_features[u].resize(pu.size());
    for (std::size_t i = 0; i < pu.size(); ++i)
      arch.unit_features[u][i] = static_cast<int>(
          uniform_index(rng, spec.features[pu[i]].options.size()));
  }
  return arch;
}

}  // namespace

std::vector<ArchConfig> sample_random(const SupernetSpec& spec, int n,
                                      std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw ConfigError("sample count must be >= 1");
  const auto pb = spec.per_block_dims();
  const auto pu = spec.per_unit_dims();
  Rng rng = make_rng(seed);
  std::vector<ArchConfig> out;
  out.reserve(n);
  for (int s = 0; s < n; ++s) {
    std::vector<int> depths(spec.units.size());
    for (std::size_t u = 0; u < spec.units.size(); ++u)
      depths[u] = pick(rng, spec.units[u].depth_options);
    out.push_back(finish_arch(spec, std::move(depths), pb, pu, rng));
  }
  return out;
}

CompositionTable::CompositionTable(const SupernetSpec& spec) : spec_(spec) {
  const std::size_t k = spec.units.size();
  suffix_min_.assign(k + 1, 0);
  suffix_max_.assign(k + 1, 0);
  for (std::size_t u = k; u-- > 0;) {
    suffix_min_[u] = suffix_min_[u + 1] + spec.units[u].min_depth();
    suffix_max_[u] = suffix_max_[u + 1] + spec.units[u].max_depth();
  }
  min_total_ = suffix_min_[0];
  max_total_ = suffix_max_[0];

  table_.resize(k + 1);
  table_[k] = {BigInt(1)};  // empty suffix: one way to reach total 0
  for (std::size_t u = k; u-- > 0;) {
    table_[u].assign(suffix_max_[u] - suffix_min_[u] + 1, BigInt(0));
    for (int t = suffix_min_[u]; t <= suffix_max_[u]; ++t) {
      BigInt ways = 0;
      for (int d : spec.units[u].depth_options) {
        const int rest = t - d;
        if (rest >= suffix_min_[u + 1] && rest <= suffix_max_[u + 1])
          ways += table_[u + 1][rest - suffix_min_[u + 1]];
      }
      table_[u][t - suffix_min_[u]] = ways;
    }
  }
}

const BigInt& CompositionTable::count_from(std::size_t u, int total) const {
  if (u > spec_.units.size()) throw Error("unit index out of range");
  if (total < suffix_min_[u] || total > suffix_max_[u]) return zero_;
  return table_[u][total - suffix_min_[u]];
}

std::vector<int> CompositionTable::sample_composition(int total,
                                                      Rng& rng) const {
  const BigInt& n = count(total);
  if (n == 0)
    throw ConfigError("no unit-depth composition realizes total " +
                      std::to_string(total));
  std::vector<int> depths(spec_.units.size());
  int remaining = total;
  for (std::size_t u = 0; u < spec_.units.size(); ++u) {
    const BigInt& here = count_from(u, remaining);
    boost::random::uniform_int_distribution<BigInt> dist(0, here - 1);
    BigInt ticket = dist(rng);
    for (int d : spec_.units[u].depth_options) {
      const BigInt& ways = count_from(u + 1, remaining - d);
      if (ticket < ways) {
        depths[u] = d;
        remaining -= d;
        break;
      }
      ticket -= ways;
    }
  }
  return depths;
}

namespace {

std::vector<int> attainable_totals(const CompositionTable& table,
                                   const DepthBins& bins, int bin) {
  if (bin < 0 || bin >= bins.n_bins) throw ConfigError("bin index out of range");
  const int lo = bins.edges[bin];
  const int hi_edge = bins.edges[bin + 1];
  const bool last = bin == bins.n_bins - 1;
  std::vector<int> totals;
  for (int t = lo; last ? t <= hi_edge : t < hi_edge; ++t)
    if (table.count(t) > 0) totals.push_back(t);
  if (totals.empty())
    throw ConfigError("bin " + std::to_string(bin) +
                      " contains no attainable total depth");
  return totals;
}

std::vector<ArchConfig> sample_bin_with_rng(const SupernetSpec& spec, int n,
                                            const CompositionTable& table,
                                            const DepthBins& bins, int bin,
                                            Rng& rng) {
  const auto pb = spec.per_block_dims();
  const auto pu = spec.per_unit_dims();
  const auto totals = attainable_totals(table, bins, bin);
  std::vector<ArchConfig> out;
  out.reserve(n);
  for (int s = 0; s < n; ++s) {
    const int total = totals[uniform_index(rng, totals.size())];
    auto depths = table.sample_composition(total, rng);
    out.push_back(finish_arch(spec, std::move(depths), pb, pu, rng));
  }
  return out;
}

}  // namespace

std::vector<ArchConfig> sample_balanced(const SupernetSpec& spec, int n,
                                        const DepthBins& bins,
                                        std::uint64_t seed) {
  spec.validate();
  if (n < bins.n_bins)
    throw ConfigError("balanced sampling needs n >= n_bins (" +
                      std::to_string(n) + " < " +
                      std::to_string(bins.n_bins) + ")");
  CompositionTable table(spec);
  const int base = n / bins.n_bins;
  const int remainder = n % bins.n_bins;
  std::vector<ArchConfig> out;
  out.reserve(n);
  Rng rng = make_rng(seed);
  for (int b = 0; b < bins.n_bins; ++b) {
    const int quota = base + (b < remainder ? 1 : 0);
    auto part = sample_bin_with_rng(spec, quota, table, bins, b, rng);
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

std::vector<ArchConfig> sample_in_bin(const SupernetSpec& spec, int n,
                                      const DepthBins& bins, int bin,
                                      std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw ConfigError("sample count must be >= 1");
  CompositionTable table(spec);
  Rng rng = make_rng(seed);
  return sample_bin_with_rng(spec, n, table, bins, bin, rng);
}

namespace {

SupernetSpec make_resnet_like(std::string name, std::vector<int> widths) {
  SupernetSpec spec;
  spec.name = std::move(name);
  for (int w : widths) {
    UnitSpec unit;
    unit.depth_options = {1, 2, 3, 4, 5, 6, 7};
    unit.stage_width = w;
    spec.units.push_back(std::move(unit));
  }
  spec.features = {
      {"kernel_size", {3, 5, 7}, FeatureScope::PerBlock},
      {"expansion_ratio", {0.5, 2.0 / 3.0, 1.0}, FeatureScope::PerBlock},
  };
  return spec;
}

SupernetSpec make_densenet() {
  SupernetSpec spec;
  spec.name = "densenet";
  for (int u = 0; u < 5; ++u) {
    UnitSpec unit;
    for (int d = 1; d <= 20; ++d) unit.depth_options.push_back(d);
    spec.units.push_back(std::move(unit));
  }
  // One kernel size per unit, applied to every block in the unit.
  spec.features = {{"kernel_size", {1, 3, 5, 7, 9}, FeatureScope::PerUnit}};
  return spec;
}

}  // namespace

const SupernetSpec& preset(std::string_view name) {
  static const SupernetSpec resnet =
      make_resnet_like("resnet", {256, 512, 1024, 2048});
  static const SupernetSpec mobilenetv3 =
      make_resnet_like("mobilenetv3", {16, 32, 64, 128});
  static const SupernetSpec densenet = make_densenet();
  if (name == "resnet") return resnet;
  if (name == "mobilenetv3") return mobilenetv3;
  if (name == "densenet") return densenet;
  throw ConfigError("unknown preset '" + std::string(name) +
                    "' (available: resnet, mobilenetv3, densenet)");
}

std::vector<std::string> preset_names() {
  return {"resnet", "mobilenetv3", "densenet"};
}

bool is_preset(std::string_view name) {
  return name == "resnet" || name == "mobilenetv3" || name == "densenet";
}

}  // namespace esm
