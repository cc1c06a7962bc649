#pragma once

#include <initializer_list>
#include <nlohmann/json.hpp>
#include <string>

#include "esm/archspace.hpp"
#include "esm/encoding.hpp"
#include "esm/measurement.hpp"

namespace esm {

using Json = nlohmann::json;

// Rejects objects with keys outside required+optional and reports missing
// required keys; `where` names the offending location in the message.
void check_keys(const Json& obj, std::initializer_list<const char*> required,
                std::initializer_list<const char*> optional,
                const std::string& where);

void to_json(Json& j, const FeatureDim& dim);
void from_json(const Json& j, FeatureDim& dim);

void to_json(Json& j, const UnitSpec& unit);
void from_json(const Json& j, UnitSpec& unit);

void to_json(Json& j, const SupernetSpec& spec);
void from_json(const Json& j, SupernetSpec& spec);

void to_json(Json& j, const ArchConfig& arch);
void from_json(const Json& j, ArchConfig& arch);

void to_json(Json& j, const DepthBins& bins);
void from_json(const Json& j, DepthBins& bins);

void to_json(Json& j, const OracleParams& params);
void from_json(const Json& j, OracleParams& params);

// Wraps nlohmann parse errors in SchemaError with a source label.
Json parse_json_line(const std::string& line, const std::string& where);

}  // namespace esm
