#pragma once

namespace esm {

inline constexpr const char* kVersion = "0.1.0";

// Bumped whenever the on-disk layout of datasets, models or LUTs changes.
inline constexpr int kFormatVersion = 1;

}  // namespace esm
