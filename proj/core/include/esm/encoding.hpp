#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "esm/archspace.hpp"

namespace esm {

// Vector representations of an architecture. fcc and feature_count are the
// histogram-style encodings; statistical, feature and one_hot are the
// conventional baselines.
enum class EncodingScheme { Fcc, FeatureCount, Statistical, Feature, OneHot };

// Canonical tags: fcc, fc, statistical, feature, onehot.
std::string to_string(EncodingScheme scheme);
EncodingScheme parse_scheme(std::string_view tag);

struct EncodedVector {
  std::vector<double> values;
  EncodingScheme scheme = EncodingScheme::Fcc;
  std::string spec_name;
};

// Exact vector length for (spec, scheme); every encode() output has it.
std::size_t encoding_length(const SupernetSpec& spec, EncodingScheme scheme);

EncodedVector encode(const SupernetSpec& spec, const ArchConfig& arch,
                     EncodingScheme scheme);

// Slot order for block-feature combinations: row-major over the per-block
// dims in declaration order, options in declaration order. The same order
// keys FCC histogram slots and LUT entries.
std::size_t per_block_combo_count(const SupernetSpec& spec);
std::size_t per_block_combo_index(const SupernetSpec& spec,
                                  const std::vector<int>& option_indices);

// one_hot is lossless on active slots; recovers the exact ArchConfig.
// Throws SchemaError when the vector is not a valid one-hot encoding.
ArchConfig decode_one_hot(const SupernetSpec& spec, const EncodedVector& vec);

}  // namespace esm
