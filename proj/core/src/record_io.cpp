#include "record_io.hpp"

#include <sstream>

#include "esm/error.hpp"
#include "esm/rng.hpp"
#include "esm/version.hpp"

namespace esm::detail {

namespace {

constexpr const char* kChecksumPrefix = "fnv1a64:";
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;

std::string checksum_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace

RecordWriter::RecordWriter(const std::filesystem::path& path)
    : out_(path, std::ios::binary), hash_(kFnvOffset) {
  if (!out_) throw Error("cannot open '" + path.string() + "' for writing");
}

void RecordWriter::write(const Json& record) {
  const std::string line = record.dump() + "\n";
  hash_ = fnv1a64(line, hash_);
  out_ << line;
}

void RecordWriter::finish() {
  Json trailer{{"type", "checksum"},
               {"value", kChecksumPrefix + checksum_hex(hash_)}};
  out_ << trailer.dump() << "\n";
  out_.flush();
  if (!out_) throw Error("write failed while finishing file");
}

RecordReader::RecordReader(const std::filesystem::path& path) : path_(path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(std::move(line));

  std::uint64_t hash = kFnvOffset;
  bool checksum_seen = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& current = lines[i];
    Json record;
    try {
      record = parse_json_line(current, path.string());
    } catch (const SchemaError&) {
      // A broken final line is truncation, not a schema problem.
      if (i + 1 == lines.size())
        throw ChecksumError("'" + path.string() +
                            "' ends mid-record: file is truncated");
      throw;
    }
    if (record.is_object() && record.value("type", "") == "checksum") {
      check_keys(record, {"type", "value"}, {}, "checksum trailer");
      const std::string value = record.at("value").get<std::string>();
      if (value != kChecksumPrefix + checksum_hex(hash))
        throw ChecksumError("checksum mismatch in '" + path.string() +
                            "': file is truncated or corrupted");
      checksum_seen = true;
      continue;
    }
    if (checksum_seen)
      throw ChecksumError("data after checksum trailer in '" + path.string() +
                          "'");
    hash = fnv1a64(current + "\n", hash);
    records_.push_back(std::move(record));
  }
  if (!checksum_seen)
    throw ChecksumError("missing checksum trailer in '" + path.string() +
                        "': file is truncated or corrupted");
  if (records_.empty())
    throw SchemaError("'" + path.string() + "' contains no records");
}

const Json& RecordReader::header(const std::string& expected_kind) const {
  const Json& h = records_.front();
  if (!h.is_object() || h.value("type", "") != "header")
    throw SchemaError("'" + path_.string() + "' does not start with a header");
  const int version = h.value("format_version", -1);
  if (version != kFormatVersion)
    throw VersionError("'" + path_.string() + "' has format version " +
                       std::to_string(version) + ", this build supports " +
                       std::to_string(kFormatVersion));
  if (h.value("kind", "") != expected_kind)
    throw SchemaError("'" + path_.string() + "' is a '" +
                      h.value("kind", "?") + "' file, expected '" +
                      expected_kind + "'");
  return h;
}

std::span<const Json> RecordReader::body() const {
  return {records_.data() + 1, records_.size() - 1};
}

}  // namespace esm::detail
