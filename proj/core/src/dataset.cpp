#include "esm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "esm/error.hpp"
#include "esm/jsonio.hpp"
#include "esm/rng.hpp"
#include "esm/version.hpp"
#include "record_io.hpp"

namespace esm {

std::vector<std::size_t> LatencyDataset::nonref_indices() const {
  std::vector<std::size_t> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (!samples[i].is_reference) out.push_back(i);
  return out;
}

std::map<int, std::vector<std::size_t>> LatencyDataset::partition_by_bin()
    const {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i : nonref_indices())
    out[bin_index(samples[i].arch, bins)].push_back(i);
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split(
    const LatencyDataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test_fraction must lie in (0, 1)");
  std::vector<std::size_t> train, test;
  Rng rng = make_rng(seed);
  const auto partition = ds.partition_by_bin();
  for (int b = 0; b < ds.bins.n_bins; ++b) {
    auto it = partition.find(b);
    if (it == partition.end() || it->second.empty()) {
      std::cerr << "[esm] warning: bin " << b
                << " is empty; stratified split skips it\n";
      continue;
    }
    auto idxs = it->second;
    std::shuffle(idxs.begin(), idxs.end(), rng);
    const auto n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(idxs.size())));
    if (n_test == 0 || n_test == idxs.size())
      std::cerr << "[esm] warning: bin " << b << " has only " << idxs.size()
                << " samples; split is degenerate there\n";
    test.insert(test.end(), idxs.begin(), idxs.begin() + n_test);
    train.insert(train.end(), idxs.begin() + n_test, idxs.end());
  }
  return {std::move(train), std::move(test)};
}

void save_dataset(const LatencyDataset& ds, const std::filesystem::path& path) {
  detail::RecordWriter writer(path);
  Json header{{"type", "header"},
              {"format_version", kFormatVersion},
              {"kind", "dataset"},
              {"spec", ds.spec},
              {"scheme", to_string(ds.scheme)},
              {"bins", ds.bins},
              {"backend_id", ds.backend_id},
              {"root_seed", ds.root_seed},
              {"dataset_version", ds.dataset_version}};
  writer.write(header);
  for (const auto& ref : ds.refs)
    writer.write(Json{{"type", "reference_arch"}, {"arch", ref}});
  for (const auto& s : ds.samples) {
    Json record{{"type", "sample"},
                {"id", s.id},
                {"arch", s.arch},
                {"latency_ms", s.latency_ms},
                {"is_reference", s.is_reference},
                {"batch_id", s.batch_id}};
    if (s.ref_index >= 0) record["ref_index"] = s.ref_index;
    if (s.encoded) record["encoded"] = *s.encoded;
    writer.write(record);
  }
  writer.finish();
}

LatencyDataset load_dataset(const std::filesystem::path& path) {
  detail::RecordReader reader(path);
  const Json& header = reader.header("dataset");
  check_keys(header,
             {"type", "format_version", "kind", "spec", "scheme", "bins",
              "backend_id", "root_seed", "dataset_version"},
             {}, "dataset header");
  LatencyDataset ds;
  header.at("spec").get_to(ds.spec);
  ds.scheme = parse_scheme(header.at("scheme").get<std::string>());
  header.at("bins").get_to(ds.bins);
  header.at("backend_id").get_to(ds.backend_id);
  header.at("root_seed").get_to(ds.root_seed);
  header.at("dataset_version").get_to(ds.dataset_version);

  const std::size_t expected_len = encoding_length(ds.spec, ds.scheme);
  for (const Json& record : reader.body()) {
    const std::string type = record.value("type", "");
    if (type == "reference_arch") {
      check_keys(record, {"type", "arch"}, {}, "reference record");
      ArchConfig arch = record.at("arch").get<ArchConfig>();
      validate_arch(ds.spec, arch);
      ds.refs.push_back(std::move(arch));
    } else if (type == "sample") {
      check_keys(record,
                 {"type", "id", "arch", "latency_ms", "is_reference",
                  "batch_id"},
                 {"ref_index", "encoded"}, "sample record");
      Sample s;
      record.at("id").get_to(s.id);
      record.at("arch").get_to(s.arch);
      record.at("latency_ms").get_to(s.latency_ms);
      record.at("is_reference").get_to(s.is_reference);
      record.at("batch_id").get_to(s.batch_id);
      if (record.contains("ref_index"))
        record.at("ref_index").get_to(s.ref_index);
      if (record.contains("encoded")) {
        s.encoded = record.at("encoded").get<std::vector<double>>();
        if (s.encoded->size() != expected_len)
          throw SchemaError("sample '" + s.id + "': encoded length " +
                            std::to_string(s.encoded->size()) +
                            " != expected " + std::to_string(expected_len));
      }
      validate_arch(ds.spec, s.arch);
      if (!(s.latency_ms > 0) || !std::isfinite(s.latency_ms))
        throw SchemaError("sample '" + s.id + "': latency must be positive");
      ds.samples.push_back(std::move(s));
    } else {
      throw SchemaError("unknown record type '" + type + "' in '" +
                        path.string() + "'");
    }
  }
  return ds;
}

void save_arch_list(const ArchList& list, const std::filesystem::path& path) {
  detail::RecordWriter writer(path);
  writer.write(Json{{"type", "header"},
                    {"format_version", kFormatVersion},
                    {"kind", "arch_list"},
                    {"spec", list.spec},
                    {"bins", list.bins},
                    {"root_seed", list.root_seed}});
  for (const auto& arch : list.archs)
    writer.write(Json{{"type", "arch"}, {"arch", arch}});
  writer.finish();
}

ArchList load_arch_list(const std::filesystem::path& path) {
  detail::RecordReader reader(path);
  const Json& header = reader.header("arch_list");
  check_keys(header,
             {"type", "format_version", "kind", "spec", "bins", "root_seed"},
             {}, "arch list header");
  ArchList list;
  header.at("spec").get_to(list.spec);
  header.at("bins").get_to(list.bins);
  header.at("root_seed").get_to(list.root_seed);
  for (const Json& record : reader.body()) {
    if (record.value("type", "") != "arch")
      throw SchemaError("unexpected record type in arch list '" +
                        path.string() + "'");
    check_keys(record, {"type", "arch"}, {}, "arch record");
    ArchConfig arch = record.at("arch").get<ArchConfig>();
    validate_arch(list.spec, arch);
    list.archs.push_back(std::move(arch));
  }
  return list;
}

}  // namespace esm
