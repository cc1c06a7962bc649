#pragma once

// Internal helpers for the line-delimited artifact files (datasets, models,
// LUTs, arch lists): a header record, body records, and a trailing FNV-1a
// checksum over every preceding byte.

#include <filesystem>
#include <span>
#include <fstream>
#include <string>
#include <vector>

#include "esm/jsonio.hpp"

namespace esm::detail {

class RecordWriter {
 public:
  explicit RecordWriter(const std::filesystem::path& path);
  void write(const Json& record);
  void finish();

 private:
  std::ofstream out_;
  std::uint64_t hash_;
};

class RecordReader {
 public:
  explicit RecordReader(const std::filesystem::path& path);

  // Validates type/format_version/kind and returns the header record.
  const Json& header(const std::string& expected_kind) const;
  std::span<const Json> body() const;

 private:
  std::filesystem::path path_;
  std::vector<Json> records_;
};

}  // namespace esm::detail
