#pragma once

// Structured run configuration for esmkit. One JSON document mirrors
// EsmConfig section by section; CLI flags override file keys.

#include <filesystem>
#include <optional>
#include <string>

#include "esm/esm_loop.hpp"
#include "esm/jsonio.hpp"

namespace esmkit {

struct FileConfig {
  esm::EsmConfig esm;
  std::string out_dir = "esm-out";
};

// Accepts a preset name, a path to a spec JSON file, or an inline object.
esm::SupernetSpec resolve_spec(const esm::Json& value);

FileConfig parse_config(const esm::Json& doc);
FileConfig load_config_file(const std::filesystem::path& path);

// Fully resolved config (defaults applied) for run manifests.
esm::Json config_to_json(const FileConfig& config);

}  // namespace esmkit
