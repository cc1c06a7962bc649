#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "esm/encoding.hpp"
#include "esm/error.hpp"
#include "esm/rng.hpp"

using namespace esm;

namespace {

const SupernetSpec& resnet() { return preset("resnet"); }

// ResNet arch with explicit depths and per-block (kernel_idx, ratio_idx).
ArchConfig resnet_arch(const std::vector<int>& depths,
                       const std::vector<std::vector<std::pair<int, int>>>& blocks) {
  ArchConfig arch;
  arch.spec_name = "resnet";
  arch.unit_depths = depths;
  arch.block_features.resize(4);
  arch.unit_features.assign(4, {});
  for (std::size_t u = 0; u < 4; ++u)
    for (const auto& [k, r] : blocks[u])
      arch.block_features[u].push_back({k, r});
  return arch;
}

// Swaps two blocks inside the first unit with depth >= 2 and differing rows.
ArchConfig permute_blocks(const SupernetSpec& spec, ArchConfig arch,
                          bool* changed) {
  *changed = false;
  for (std::size_t u = 0; u < spec.units.size(); ++u) {
    auto& rows = arch.block_features[u];
    for (std::size_t b = 1; b < rows.size(); ++b)
      if (rows[b] != rows[0]) {
        std::swap(rows[0], rows[b]);
        *changed = true;
        return arch;
      }
  }
  return arch;
}

}  // namespace

TEST_CASE("encoding lengths follow the layout arithmetic") {
  const auto& spec = resnet();
  CHECK(encoding_length(spec, EncodingScheme::Fcc) == 36);
  CHECK(encoding_length(spec, EncodingScheme::FeatureCount) == 24);
  CHECK(encoding_length(spec, EncodingScheme::Statistical) == 20);
  CHECK(encoding_length(spec, EncodingScheme::Feature) == 56);
  CHECK(encoding_length(spec, EncodingScheme::OneHot) == 196);

  const auto& dense = preset("densenet");
  CHECK(encoding_length(dense, EncodingScheme::Fcc) == 30);       // (1+5)*5
  CHECK(encoding_length(dense, EncodingScheme::FeatureCount) == 25);
  CHECK(encoding_length(dense, EncodingScheme::Statistical) == 10);
  CHECK(encoding_length(dense, EncodingScheme::Feature) == 5);
  CHECK(encoding_length(dense, EncodingScheme::OneHot) == 125);
}

TEST_CASE("emitted vectors always match encoding_length") {
  for (const auto& name : preset_names()) {
    const auto& spec = preset(name);
    const auto archs = sample_random(spec, 25, fnv1a64(name));
    for (auto scheme :
         {EncodingScheme::Fcc, EncodingScheme::FeatureCount,
          EncodingScheme::Statistical, EncodingScheme::Feature,
          EncodingScheme::OneHot}) {
      const auto expected = encoding_length(spec, scheme);
      for (const auto& arch : archs) {
        const auto vec = encode(spec, arch, scheme);
        CHECK(vec.values.size() == expected);
        for (double v : vec.values) CHECK(std::isfinite(v));
      }
    }
  }
}

TEST_CASE("fcc counts feature combinations per unit") {
  // unit 0: two blocks of (kernel=3, ratio=1/2); units 1..3: one such block
  const auto arch = resnet_arch(
      {2, 1, 1, 1},
      {{{0, 0}, {0, 0}}, {{0, 0}}, {{0, 0}}, {{0, 0}}});
  const auto vec = encode(resnet(), arch, EncodingScheme::Fcc);
  // combo (kernel idx 0, ratio idx 0) -> slot 0 of each 9-slot unit block
  CHECK(vec.values[0] == 2.0);
  CHECK(vec.values[9] == 1.0);
  CHECK(vec.values[18] == 1.0);
  CHECK(vec.values[27] == 1.0);
  CHECK(std::accumulate(vec.values.begin(), vec.values.end(), 0.0) == 5.0);
}

TEST_CASE("fcc per-unit histogram mass equals unit depth") {
  const auto& spec = resnet();
  const auto archs = sample_random(spec, 200, 31);
  const std::size_t combos = per_block_combo_count(spec);
  for (const auto& arch : archs) {
    const auto vec = encode(spec, arch, EncodingScheme::Fcc);
    for (std::size_t u = 0; u < 4; ++u) {
      const double mass = std::accumulate(
          vec.values.begin() + u * combos,
          vec.values.begin() + (u + 1) * combos, 0.0);
      CHECK(mass == doctest::Approx(arch.unit_depths[u]));
    }
  }
}

TEST_CASE("fcc handles per-unit dims: densenet depth lands in the kernel slot") {
  const auto& spec = preset("densenet");
  auto archs = sample_random(spec, 1, 5);
  auto arch = archs[0];
  arch.unit_depths[2] = 13;
  arch.block_features[2].assign(13, {});
  arch.unit_features[2][0] = 2;  // kernel option index 2 -> kernel 5
  const auto vec = encode(spec, arch, EncodingScheme::Fcc);
  // unit block layout: [combo slot (1), kernel slots (5)] per unit
  const std::size_t unit_base = 2 * 6;
  CHECK(vec.values[unit_base] == 13.0);      // degenerate combo histogram
  CHECK(vec.values[unit_base + 1 + 0] == 0.0);
  CHECK(vec.values[unit_base + 1 + 2] == 13.0);
  CHECK(vec.values[unit_base + 1 + 4] == 0.0);
}

TEST_CASE("feature_count counts options independently") {
  // unit 0 blocks: (kernel 3, ratio 1/2), (kernel 5, ratio 1/2)
  const auto arch = resnet_arch(
      {2, 1, 1, 1},
      {{{0, 0}, {1, 0}}, {{0, 0}}, {{0, 0}}, {{0, 0}}});
  const auto vec = encode(resnet(), arch, EncodingScheme::FeatureCount);
  // unit 0 layout: kernel counts [1,1,0], ratio counts [2,0,0]
  CHECK(vec.values[0] == 1.0);
  CHECK(vec.values[1] == 1.0);
  CHECK(vec.values[2] == 0.0);
  CHECK(vec.values[3] == 2.0);
  CHECK(vec.values[4] == 0.0);
  CHECK(vec.values[5] == 0.0);
}

TEST_CASE("feature_count equals fcc marginals") {
  const auto& spec = resnet();
  const auto archs = sample_random(spec, 100, 13);
  for (const auto& arch : archs) {
    const auto fcc = encode(spec, arch, EncodingScheme::Fcc);
    const auto fc = encode(spec, arch, EncodingScheme::FeatureCount);
    for (std::size_t u = 0; u < 4; ++u) {
      // fcc unit block: 9 slots indexed kernel*3 + ratio
      double kernel_marginal[3] = {0, 0, 0};
      double ratio_marginal[3] = {0, 0, 0};
      for (int k = 0; k < 3; ++k)
        for (int r = 0; r < 3; ++r) {
          const double count = fcc.values[u * 9 + k * 3 + r];
          kernel_marginal[k] += count;
          ratio_marginal[r] += count;
        }
      for (int k = 0; k < 3; ++k)
        CHECK(fc.values[u * 6 + k] == doctest::Approx(kernel_marginal[k]));
      for (int r = 0; r < 3; ++r)
        CHECK(fc.values[u * 6 + 3 + r] == doctest::Approx(ratio_marginal[r]));
    }
  }
}

TEST_CASE("minimum-depth units contribute exactly one count per dim") {
  const auto arch = resnet_arch({1, 1, 1, 1},
                                {{{2, 1}}, {{0, 2}}, {{1, 0}}, {{2, 2}}});
  const auto vec = encode(resnet(), arch, EncodingScheme::FeatureCount);
  for (std::size_t u = 0; u < 4; ++u) {
    double kernel_total = 0, ratio_total = 0;
    for (int i = 0; i < 3; ++i) {
      kernel_total += vec.values[u * 6 + i];
      ratio_total += vec.values[u * 6 + 3 + i];
    }
    CHECK(kernel_total == 1.0);
    CHECK(ratio_total == 1.0);
  }
}

TEST_CASE("statistical encoding emits depth, mean and population std") {
  // unit 0 kernels {3,5,7}, ratios all 1/2
  const auto arch = resnet_arch(
      {3, 1, 1, 1},
      {{{0, 0}, {1, 0}, {2, 0}}, {{0, 0}}, {{0, 0}}, {{0, 0}}});
  const auto vec = encode(resnet(), arch, EncodingScheme::Statistical);
  // unit layout: [depth, kernel mean, kernel std, ratio mean, ratio std]
  CHECK(vec.values[0] == 3.0);
  CHECK(vec.values[1] == doctest::Approx(5.0));
  CHECK(vec.values[2] == doctest::Approx(std::sqrt(8.0 / 3.0)));
  CHECK(vec.values[3] == doctest::Approx(0.5));
  CHECK(vec.values[4] == doctest::Approx(0.0));
  // depth-1 unit: std terms are zero
  CHECK(vec.values[5] == 1.0);
  CHECK(vec.values[7] == 0.0);
  CHECK(vec.values[9] == 0.0);
}

TEST_CASE("feature encoding pads inactive slots with zeros") {
  const auto& spec = resnet();
  auto arch = resnet_arch({1, 1, 1, 1},
                          {{{2, 2}}, {{0, 0}}, {{0, 0}}, {{0, 0}}});
  const auto vec = encode(spec, arch, EncodingScheme::Feature);
  // unit 0 block 0 -> kernel 7, ratio 1.0; remaining 6 slots are zero pairs
  CHECK(vec.values[0] == 7.0);
  CHECK(vec.values[1] == 1.0);
  int zeros = 0;
  for (std::size_t i = 2; i < 14; ++i)
    if (vec.values[i] == 0.0) ++zeros;
  CHECK(zeros == 12);

  // full depth: no padding anywhere
  ArchConfig full = sample_random(spec, 1, 2)[0];
  for (std::size_t u = 0; u < 4; ++u) {
    full.unit_depths[u] = 7;
    full.block_features[u].assign(7, {1, 1});
  }
  const auto full_vec = encode(spec, full, EncodingScheme::Feature);
  for (double v : full_vec.values) CHECK(v != 0.0);
}

TEST_CASE("one_hot sets one active bit plus one bit per per-block dim") {
  const auto& spec = resnet();
  const auto archs = sample_random(spec, 30, 17);
  for (const auto& arch : archs) {
    const auto vec = encode(spec, arch, EncodingScheme::OneHot);
    // slot stride: 1 + 3 + 3 = 7; 7 slots per unit
    for (int u = 0; u < 4; ++u)
      for (int b = 0; b < 7; ++b) {
        const std::size_t base = (u * 7 + b) * 7;
        const double active = vec.values[base];
        double ones = 0;
        for (int i = 0; i < 7; ++i) ones += vec.values[base + i];
        if (active == 1.0)
          CHECK(ones == 3.0);  // active bit + kernel + ratio
        else
          CHECK(ones == 0.0);
      }
  }
}

TEST_CASE("one_hot round-trips the exact ArchConfig") {
  for (const auto& name : preset_names()) {
    const auto& spec = preset(name);
    for (const auto& arch : sample_random(spec, 50, fnv1a64(name, 99))) {
      const auto vec = encode(spec, arch, EncodingScheme::OneHot);
      const auto decoded = decode_one_hot(spec, vec);
      CHECK(decoded == arch);
    }
  }
}

TEST_CASE("decode_one_hot rejects corrupted vectors") {
  const auto& spec = resnet();
  const auto arch = sample_random(spec, 1, 4)[0];
  auto vec = encode(spec, arch, EncodingScheme::OneHot);
  auto bad = vec;
  bad.values[0] = 0.5;
  CHECK_THROWS_AS(decode_one_hot(spec, bad), SchemaError);
  bad = vec;
  bad.values.pop_back();
  CHECK_THROWS_AS(decode_one_hot(spec, bad), SchemaError);
}

TEST_CASE("block permutations: fcc/fc/statistical invariant, feature/one_hot not") {
  const auto& spec = resnet();
  int sensitive_feature = 0, sensitive_onehot = 0, permutable = 0;
  for (const auto& arch : sample_random(spec, 100, 23)) {
    bool changed = false;
    const auto permuted = permute_blocks(spec, arch, &changed);
    if (!changed) continue;
    ++permutable;
    for (auto scheme : {EncodingScheme::Fcc, EncodingScheme::FeatureCount,
                        EncodingScheme::Statistical}) {
      CHECK(encode(spec, arch, scheme).values ==
            encode(spec, permuted, scheme).values);
    }
    if (encode(spec, arch, EncodingScheme::Feature).values !=
        encode(spec, permuted, EncodingScheme::Feature).values)
      ++sensitive_feature;
    if (encode(spec, arch, EncodingScheme::OneHot).values !=
        encode(spec, permuted, EncodingScheme::OneHot).values)
      ++sensitive_onehot;
  }
  CHECK(permutable > 50);
  // permute_blocks swaps two differing rows, so slot-ordered encodings differ
  CHECK(sensitive_feature == permutable);
  CHECK(sensitive_onehot == permutable);
}

TEST_CASE("fcc collisions happen only between within-unit block permutations") {
  // Small space: 2 units, depths {1,2}, kernels {3,5} -> 324 archs... use
  // per-block dim only to keep the multiset argument visible.
  SupernetSpec spec;
  spec.name = "mini";
  spec.units.resize(2);
  spec.units[0].depth_options = {1, 2};
  spec.units[1].depth_options = {1, 2};
  spec.features = {{"kernel_size", {3, 5}, FeatureScope::PerBlock}};
  spec.validate();

  // enumerate all archs
  std::vector<ArchConfig> all;
  for (int d0 : {1, 2})
    for (int d1 : {1, 2}) {
      std::vector<std::vector<std::vector<int>>> unit0_choices, unit1_choices;
      auto rows_for = [](int depth) {
        std::vector<std::vector<std::vector<int>>> result;
        const int n = 1 << depth;
        for (int mask = 0; mask < n; ++mask) {
          std::vector<std::vector<int>> rows;
          for (int b = 0; b < depth; ++b)
            rows.push_back({(mask >> b) & 1});
          result.push_back(rows);
        }
        return result;
      };
      for (const auto& r0 : rows_for(d0))
        for (const auto& r1 : rows_for(d1)) {
          ArchConfig arch;
          arch.spec_name = "mini";
          arch.unit_depths = {d0, d1};
          arch.block_features = {r0, r1};
          arch.unit_features = {{}, {}};
          all.push_back(arch);
        }
    }
  CHECK(all.size() == 36);  // (2+4)^2

  auto multiset_key = [](const ArchConfig& arch) {
    std::string key;
    for (std::size_t u = 0; u < arch.unit_depths.size(); ++u) {
      auto rows = arch.block_features[u];
      std::sort(rows.begin(), rows.end());
      key += "[";
      for (const auto& row : rows)
        for (int o : row) key += std::to_string(o) + ",";
      key += "]";
    }
    return key;
  };

  std::map<std::vector<double>, std::vector<std::size_t>> by_encoding;
  for (std::size_t i = 0; i < all.size(); ++i)
    by_encoding[encode(spec, all[i], EncodingScheme::Fcc).values].push_back(i);
  for (const auto& [vec, idxs] : by_encoding) {
    for (std::size_t j = 1; j < idxs.size(); ++j)
      CHECK(multiset_key(all[idxs[0]]) == multiset_key(all[idxs[j]]));
  }
  // and distinct multisets never collide
  std::map<std::string, std::vector<double>> seen;
  for (const auto& arch : all) {
    const auto key = multiset_key(arch);
    const auto vec = encode(spec, arch, EncodingScheme::Fcc).values;
    if (seen.contains(key))
      CHECK(seen[key] == vec);
    else
      seen[key] = vec;
  }
  CHECK(seen.size() == by_encoding.size());
}

TEST_CASE("scheme tags parse and round-trip") {
  for (auto scheme : {EncodingScheme::Fcc, EncodingScheme::FeatureCount,
                      EncodingScheme::Statistical, EncodingScheme::Feature,
                      EncodingScheme::OneHot})
    CHECK(parse_scheme(to_string(scheme)) == scheme);
  CHECK(parse_scheme("feature_count") == EncodingScheme::FeatureCount);
  CHECK(parse_scheme("one_hot") == EncodingScheme::OneHot);
  CHECK_THROWS_AS(parse_scheme("bogus"), SchemaError);
}
