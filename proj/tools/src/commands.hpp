#pragma once

// Reusable pieces of the command-line front end: mode comparison, encoding
// benchmark sweeps and their table writers.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridcoord/dispatch.hpp"
#include "gridcoord/feeder.hpp"
#include "gridcoord/inverter.hpp"

namespace gridcoord::cli {

struct ModeRow {
  std::string label;
  dispatch::Policy policy;
  bool feasible = false;
  double p_kw = 0.0;  ///< total DER real power
  double q_hi_kvar = 0.0;
  double q_lo_kvar = 0.0;
  double compliance = 0.0;  ///< largest droop/capability deviation of the three dispatches
};

/// Rows VoltVar, VoltWatt, WattVar (setting fixed at its default), PQ-Free and
/// Optimized; with `setting_variants` also the per-mode rows with a free setting.
std::vector<ModeRow> compare_modes(const dispatch::DispatchContext& base, bool setting_variants = true);

std::string comparison_csv(const std::vector<ModeRow>& rows, const std::string& hash);
std::string comparison_text(const std::vector<ModeRow>& rows);

/// Copy of `model` with `count` DERs placed round-robin over the phases of
/// the original DER buses (several DERs may share a node).
feeder::FeederModel with_der_count(const feeder::FeederModel& model, std::size_t count);

struct BenchCell {
  std::string encoding;
  std::size_t der_count = 0;
  std::string stage;
  double wall_ms = 0.0;
  std::uint64_t simplex_iterations = 0;
  std::uint64_t nodes = 0;
  std::string status = "ok";
};

/// Stage 1, 2a (min and max) and 2b per encoding and DER count. A cell that
/// hits the node limit or fails is recorded with its status.
std::vector<BenchCell> bench_sweep(const feeder::FeederModel& model, const std::vector<inverter::InverterSpec>& specs,
                                   const inverter::StandardProfile& profile, double irradiance,
                                   const std::vector<std::size_t>& der_counts,
                                   const std::vector<inverter::Encoding>& encodings,
                                   std::uint64_t node_limit = 200'000);

std::string bench_csv(const std::vector<BenchCell>& cells);

/// Totals over the stages of one (encoding, DER count) pair.
struct BenchTotal {
  double wall_ms = 0.0;
  std::uint64_t nodes = 0;
  std::uint64_t simplex_iterations = 0;
  bool complete = true;
};
BenchTotal bench_total(const std::vector<BenchCell>& cells, const std::string& encoding, std::size_t der_count);

}  // namespace gridcoord::cli
