#pragma once

// Bundled scenarios: feeders, fleets, transmission cases and the scenario
// files tying them together. Every file listed in CHECKSUMS is verified
// before use.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gridcoord/feeder.hpp"
#include "gridcoord/io.hpp"
#include "gridcoord/tso.hpp"

namespace gridcoord::data {

/// $GRIDCOORD_DATA_DIR when set, otherwise the source-tree data folder.
std::filesystem::path default_dir();

std::string sha256_hex(const std::string& bytes);

/// Parses "<hex>  <relative path>" lines.
std::map<std::string, std::string> read_checksums(const std::filesystem::path& dir);

/// Throws ChecksumMismatch when `rel` is listed with a different digest or
/// is not listed at all.
void verify_file(const std::filesystem::path& dir, const std::string& rel);

/// Rewrites CHECKSUMS over every json/csv file below `dir`.
void write_checksums(const std::filesystem::path& dir);

std::vector<std::string> list_scenarios(const std::filesystem::path& dir = default_dir());

struct Scenario {
  std::string name;
  std::string description;
  feeder::FeederModel feeder;
  io::InverterFleet fleet;
  std::optional<tso::TransmissionCase> transmission;
  double irradiance = 1.0;
  double load_scale = 1.0;
  std::optional<std::pair<int, int>> outage;
  std::filesystem::path file;
};

/// Loads data/scenarios/<name>.json and everything it references.
Scenario load_scenario(const std::string& name, const std::filesystem::path& dir = default_dir());

/// Copy of `model` with every load scaled.
feeder::FeederModel scale_loads(feeder::FeederModel model, double factor);

}  // namespace gridcoord::data
