#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "esm/rng.hpp"

namespace esm {

using BigInt = boost::multiprecision::cpp_int;

enum class FeatureScope { PerBlock, PerUnit };

std::string to_string(FeatureScope scope);
FeatureScope parse_scope(std::string_view text);

// One searchable categorical dimension, e.g. kernel_size over {3,5,7}.
// Option order is fixed: it defines the slot order of every encoding.
struct FeatureDim {
  std::string name;
  std::vector<double> options;
  FeatureScope scope = FeatureScope::PerBlock;

  bool operator==(const FeatureDim&) const = default;
};

struct UnitSpec {
  std::vector<int> depth_options;      // blocks per unit, ascending
  std::optional<int> stage_width;      // channels; fixed metadata, not searched

  int min_depth() const { return depth_options.front(); }
  int max_depth() const { return depth_options.back(); }

  bool operator==(const UnitSpec&) const = default;
};

// Declarative architecture space: a fixed macro-architecture of sequential
// units whose depth and block features vary.
struct SupernetSpec {
  std::string name;
  std::vector<UnitSpec> units;
  std::vector<FeatureDim> features;

  // Throws SchemaError when an invariant is violated.
  void validate() const;

  std::vector<std::size_t> per_block_dims() const;
  std::vector<std::size_t> per_unit_dims() const;

  int min_total_depth() const;
  int max_total_depth() const;

  bool operator==(const SupernetSpec&) const = default;
};

// One sampled architecture. Feature assignments are stored as option
// indices into the spec's FeatureDim option lists.
struct ArchConfig {
  std::string spec_name;
  std::vector<int> unit_depths;
  // block_features[u][b][i] = option index of per-block dim i for block b
  // of unit u; i runs over spec.per_block_dims() in declaration order.
  std::vector<std::vector<std::vector<int>>> block_features;
  // unit_features[u][i] = option index of per-unit dim i for unit u.
  std::vector<std::vector<int>> unit_features;

  bool operator==(const ArchConfig&) const = default;
};

// Throws SchemaError when arch does not fit spec.
void validate_arch(const SupernetSpec& spec, const ArchConfig& arch);

// Equally spaced intervals over total depth. Bin i covers
// [edges[i], edges[i+1]); the final edge is inclusive.
struct DepthBins {
  int n_bins = 1;
  std::vector<int> edges;

  bool operator==(const DepthBins&) const = default;
};

// Exact number of distinct architectures in the space.
BigInt space_size(const SupernetSpec& spec);

// "8.38e26"-style rendering with three significant digits.
std::string format_scientific(const BigInt& value);

int total_depth(const ArchConfig& arch);

DepthBins make_bins(const SupernetSpec& spec, int n_bins);

int bin_index(int total, const DepthBins& bins);
int bin_index(const ArchConfig& arch, const DepthBins& bins);

// Uniform sampling over the whole space: depths and features drawn
// independently. Deterministic given seed; with replacement.
std::vector<ArchConfig> sample_random(const SupernetSpec& spec, int n,
                                      std::uint64_t seed);

// Equal allocation per depth bin (remainder to lowest-index bins). Within a
// bin the total depth is uniform over attainable totals and the unit-depth
// composition is uniform over all compositions of that total.
std::vector<ArchConfig> sample_balanced(const SupernetSpec& spec, int n,
                                        const DepthBins& bins,
                                        std::uint64_t seed);

// n samples from one bin, same within-bin law as sample_balanced.
std::vector<ArchConfig> sample_in_bin(const SupernetSpec& spec, int n,
                                      const DepthBins& bins, int bin,
                                      std::uint64_t seed);

// Exact composition counts: ways to pick unit depths summing to each total.
// Counts can exceed 64 bits for deep spaces, hence BigInt.
class CompositionTable {
 public:
  explicit CompositionTable(const SupernetSpec& spec);

  // Number of depth tuples with the given total over units [u, end).
  const BigInt& count_from(std::size_t u, int total) const;
  // Number of depth tuples with the given grand total.
  const BigInt& count(int total) const { return count_from(0, total); }

  // Depth tuple drawn uniformly among all tuples realizing `total`.
  std::vector<int> sample_composition(int total, Rng& rng) const;

  int min_total() const { return min_total_; }
  int max_total() const { return max_total_; }

 private:
  const SupernetSpec& spec_;
  int min_total_ = 0;
  int max_total_ = 0;
  // table_[u][t - suffix_min(u)] = count over units u..end summing to t.
  std::vector<std::vector<BigInt>> table_;
  std::vector<int> suffix_min_;
  std::vector<int> suffix_max_;
  BigInt zero_;
};

// Built-in spaces: "resnet", "mobilenetv3", "densenet".
const SupernetSpec& preset(std::string_view name);
std::vector<std::string> preset_names();
bool is_preset(std::string_view name);

}  // namespace esm
