#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "esm/archspace.hpp"
#include "esm/measurement.hpp"

namespace esm {

// Additive per-block cost model. Entries are keyed by unit and by the
// block's effective feature combination: all feature dims in declaration
// order (per-unit dims contribute the unit's selection), options row-major.
// c0 is the depth-zero extrapolated fixed overhead.
struct LatencyLut {
  std::string spec_name;
  double c0 = 0;
  std::vector<std::vector<double>> entries;  // [unit][combo]
  std::vector<std::string> clamped;          // probes with negative increments

  std::size_t combos_per_unit() const {
    return entries.empty() ? 0 : entries.front().size();
  }
};

// Effective combination index of block b in unit u.
std::size_t lut_combo_index(const SupernetSpec& spec, const ArchConfig& arch,
                            std::size_t unit, int block);
std::size_t lut_combo_count(const SupernetSpec& spec);

// Profiles the space with probe architectures: the minimum arch plus, per
// (unit, combination), the minimum arch with one extra block of that
// combination. Entries are the measured increments; c0 makes the LUT exact
// on the minimum arch. Negative increments are clamped to 0 and reported.
LatencyLut build_lut(const SupernetSpec& spec, MeasurementBackend& backend,
                     int runs_per_arch, std::uint64_t seed);

// c0 + sum of entries over the arch's blocks.
double lut_predict(const LatencyLut& lut, const SupernetSpec& spec,
                   const ArchConfig& arch);

std::vector<double> lut_predict_batch(const LatencyLut& lut,
                                      const SupernetSpec& spec,
                                      const std::vector<ArchConfig>& archs);

struct BiasCorrection {
  double slope = 1;
  double intercept = 0;

  double apply(double lut_prediction) const {
    return slope * lut_prediction + intercept;
  }
};

// Ordinary least squares of actual latency on LUT prediction. Needs at
// least 2 calibration points with distinct predictions.
BiasCorrection fit_bias(const std::vector<double>& lut_predictions,
                        const std::vector<double>& actual);

void save_lut(const LatencyLut& lut, const std::filesystem::path& path);
LatencyLut load_lut(const std::filesystem::path& path);

}  // namespace esm
