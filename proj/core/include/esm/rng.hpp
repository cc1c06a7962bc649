#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace esm {

// 64-bit FNV-1a. Used for seed derivation labels and file checksums.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = 0xcbf29ce484222325ull) {
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// All randomness in a run flows from one root seed through named substreams,
// so any stage can be replayed in isolation.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
  return splitmix64(root ^ fnv1a64(label));
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                    std::uint64_t index) {
  return splitmix64(derive_seed(root, label) +
                    0x9e3779b97f4a7c15ull * (index + 1));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& options) {
  return options[uniform_index(rng, options.size())];
}

}  // namespace esm
