#pragma once

// JSON ingestion for feeders, inverter fleets and droop profiles.
// Parse failures carry line:column positions.

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcoord/feeder.hpp"
#include "gridcoord/inverter.hpp"

namespace gridcoord::io {

using nlohmann::json;

/// Throws ParseError "<source>:<line>:<col>: <message>".
json parse_json(const std::string& text, const std::string& source = "<string>");
json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

/// Converts ohms/kW/kvar to per-unit and calls finalize().
feeder::FeederModel feeder_from_json(const json& doc);
feeder::FeederModel load_feeder(const std::filesystem::path& path);
json feeder_to_json(const feeder::FeederModel& model);

struct InverterFleet {
  std::vector<inverter::InverterSpec> specs;  ///< per-unit on the feeder base
  inverter::StandardProfile profile;
  const inverter::InverterSpec& find(const std::string& id) const;
};

/// Inverter ratings are converted with `base`. A missing `profile` key keeps
/// the defaults; missing profile fields keep their defaults too.
InverterFleet fleet_from_json(const json& doc, const feeder::Base& base);
InverterFleet load_fleet(const std::filesystem::path& path, const feeder::Base& base);
inverter::StandardProfile profile_from_json(const json& doc);
json profile_to_json(const inverter::StandardProfile& profile);

}  // namespace gridcoord::io
