#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "esm/archspace.hpp"
#include "esm/encoding.hpp"

namespace esm {

struct Sample {
  std::string id;
  ArchConfig arch;
  double latency_ms = 0;
  bool is_reference = false;
  int ref_index = -1;
  std::string batch_id;
  // Filled by the encode step when encodings are persisted with the dataset;
  // otherwise recomputed on demand.
  std::optional<std::vector<double>> encoded;
};

// Architecture-latency pairs plus everything needed to reproduce them:
// the full spec, bin layout, backend identity and root seed.
struct LatencyDataset {
  SupernetSpec spec;
  EncodingScheme scheme = EncodingScheme::Fcc;
  DepthBins bins;
  std::vector<Sample> samples;
  std::vector<ArchConfig> refs;
  std::string backend_id;
  std::uint64_t root_seed = 0;
  int dataset_version = 1;

  std::vector<std::size_t> nonref_indices() const;
  std::size_t nonref_size() const { return nonref_indices().size(); }

  // Every non-reference sample lands in exactly one bin.
  std::map<int, std::vector<std::size_t>> partition_by_bin() const;
};

// Stratified train/test split of the non-reference samples: each bin is
// split at test_fraction (+-1 sample). Reference samples never appear.
// Returns (train indices, test indices); deterministic given seed.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split(
    const LatencyDataset& ds, double test_fraction, std::uint64_t seed);

// Line-delimited JSON with a header record and a trailing checksum; see
// docs/formats.md. Load distinguishes version, checksum and schema errors.
void save_dataset(const LatencyDataset& ds, const std::filesystem::path& path);
LatencyDataset load_dataset(const std::filesystem::path& path);

// Arch lists share the dataset file conventions, minus latencies.
struct ArchList {
  SupernetSpec spec;
  DepthBins bins;
  std::vector<ArchConfig> archs;
  std::uint64_t root_seed = 0;
};

void save_arch_list(const ArchList& list, const std::filesystem::path& path);
ArchList load_arch_list(const std::filesystem::path& path);

}  // namespace esm
