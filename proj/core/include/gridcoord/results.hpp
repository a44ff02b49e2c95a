#pragma once

// Serialization of results: dispatch JSON, coordination trace CSV, voltage
// CSV. Result files carry a config hash and never timings, so repeated
// runs produce identical bytes; timings go to a separate file.

#include <string>

#include <nlohmann/json.hpp>

#include "gridcoord/coordinate.hpp"
#include "gridcoord/dispatch.hpp"
#include "gridcoord/feeder.hpp"

namespace gridcoord::results {

using nlohmann::json;

/// Short digest (first 16 hex chars of sha256) of the canonical inputs.
std::string config_hash(const std::string& canonical_inputs);

/// Setpoints in kW/kvar, settings and envelope; `with_stats` adds node and
/// simplex counts.
json dispatch_to_json(const dispatch::DispatchContext& ctx, const dispatch::DispatchResult& r, bool with_stats = true);

/// Header `# config <hash>` then `bus_phase,v_pu,y_pu2`.
std::string voltages_csv(const feeder::FeederModel& model, const std::vector<double>& vmag, const std::string& hash);

/// `iter,interface_bus,q_lo,q_hi,q_req,q_meas,p_star,stage_ms,decision` with
/// kvar/kW units; stage_ms is omitted (written as 0) when `with_timing` is false.
std::string trace_csv(const coordinate::CoordinationResult& r, const std::string& hash, bool with_timing = false);

json timings_json(const coordinate::CoordinationResult& r);

}  // namespace gridcoord::results
