#include "esm/jsonio.hpp"

#include <algorithm>

#include "esm/error.hpp"

namespace esm {

void check_keys(const Json& obj, std::initializer_list<const char*> required,
                std::initializer_list<const char*> optional,
                const std::string& where) {
  if (!obj.is_object())
    throw SchemaError(where + ": expected an object");
  for (const char* key : required)
    if (!obj.contains(key))
      throw SchemaError(where + ": missing required key '" + key + "'");
  for (const auto& [key, value] : obj.items()) {
    const auto match = [&key](const char* k) { return key == k; };
    if (!std::any_of(required.begin(), required.end(), match) &&
        !std::any_of(optional.begin(), optional.end(), match))
      throw SchemaError(where + ": unknown key '" + key + "'");
  }
}

void to_json(Json& j, const FeatureDim& dim) {
  j = Json{{"name", dim.name},
           {"options", dim.options},
           {"scope", to_string(dim.scope)}};
}

void from_json(const Json& j, FeatureDim& dim) {
  check_keys(j, {"name", "options", "scope"}, {}, "feature");
  j.at("name").get_to(dim.name);
  j.at("options").get_to(dim.options);
  dim.scope = parse_scope(j.at("scope").get<std::string>());
}

void to_json(Json& j, const UnitSpec& unit) {
  j = Json{{"depth_options", unit.depth_options}};
  if (unit.stage_width) j["stage_width"] = *unit.stage_width;
}

void from_json(const Json& j, UnitSpec& unit) {
  check_keys(j, {"depth_options"}, {"stage_width"}, "unit");
  j.at("depth_options").get_to(unit.depth_options);
  if (j.contains("stage_width"))
    unit.stage_width = j.at("stage_width").get<int>();
  else
    unit.stage_width.reset();
}

void to_json(Json& j, const SupernetSpec& spec) {
  j = Json{{"name", spec.name},
           {"units", spec.units},
           {"features", spec.features}};
}

void from_json(const Json& j, SupernetSpec& spec) {
  check_keys(j, {"name", "units", "features"}, {}, "spec");
  j.at("name").get_to(spec.name);
  j.at("units").get_to(spec.units);
  j.at("features").get_to(spec.features);
  spec.validate();
}

void to_json(Json& j, const ArchConfig& arch) {
  j = Json{{"spec_name", arch.spec_name},
           {"unit_depths", arch.unit_depths},
           {"block_features", arch.block_features},
           {"unit_features", arch.unit_features}};
}

void from_json(const Json& j, ArchConfig& arch) {
  check_keys(j, {"spec_name", "unit_depths", "block_features", "unit_features"},
             {}, "arch");
  j.at("spec_name").get_to(arch.spec_name);
  j.at("unit_depths").get_to(arch.unit_depths);
  j.at("block_features").get_to(arch.block_features);
  j.at("unit_features").get_to(arch.unit_features);
}

void to_json(Json& j, const DepthBins& bins) {
  j = Json{{"n_bins", bins.n_bins}, {"edges", bins.edges}};
}

void from_json(const Json& j, DepthBins& bins) {
  check_keys(j, {"n_bins", "edges"}, {}, "bins");
  j.at("n_bins").get_to(bins.n_bins);
  j.at("edges").get_to(bins.edges);
  if (bins.n_bins < 1 ||
      bins.edges.size() != static_cast<std::size_t>(bins.n_bins) + 1)
    throw SchemaError("bins: edges must hold n_bins+1 entries");
  if (!std::is_sorted(bins.edges.begin(), bins.edges.end()))
    throw SchemaError("bins: edges must be non-decreasing");
}

void to_json(Json& j, const OracleParams& params) {
  j = Json{{"a1", params.a1},       {"a2", params.a2},
           {"a3", params.a3},       {"alpha", params.alpha},
           {"gamma", params.gamma}, {"rho", params.rho},
           {"sigma", params.sigma}, {"width_ref", params.width_ref}};
}

void from_json(const Json& j, OracleParams& params) {
  check_keys(j, {},
             {"a1", "a2", "a3", "alpha", "gamma", "rho", "sigma", "width_ref"},
             "oracle");
  params = OracleParams{};
  if (j.contains("a1")) j.at("a1").get_to(params.a1);
  if (j.contains("a2")) j.at("a2").get_to(params.a2);
  if (j.contains("a3")) j.at("a3").get_to(params.a3);
  if (j.contains("alpha")) j.at("alpha").get_to(params.alpha);
  if (j.contains("gamma")) j.at("gamma").get_to(params.gamma);
  if (j.contains("rho")) j.at("rho").get_to(params.rho);
  if (j.contains("sigma")) j.at("sigma").get_to(params.sigma);
  if (j.contains("width_ref")) j.at("width_ref").get_to(params.width_ref);
  params.validate();
}

Json parse_json_line(const std::string& line, const std::string& where) {
  try {
    return Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw SchemaError(where + ": invalid JSON: " + e.what());
  }
}

}  // namespace esm
