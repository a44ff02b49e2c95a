#pragma once

// DSO hierarchical stages over the linearized feeder: real-power
// maximization, reactive envelope aggregation and weighted disaggregation.
// Every stage is one MILP assembled by build_stage_model.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridcoord/feeder.hpp"
#include "gridcoord/inverter.hpp"
#include "gridcoord/milp.hpp"

namespace gridcoord::dispatch {

/// How the droop laws enter the model.
struct Policy {
  enum class Kind { Optimized, Forced, PqFree };
  Kind kind = Kind::Optimized;
  inverter::Mode mode = inverter::Mode::VoltVar;  ///< Forced only
  bool free_setting = false;                      ///< Forced only; otherwise fixed at the profile default

  static Policy optimized() { return {}; }
  static Policy pq_free() { return {Kind::PqFree, inverter::Mode::VoltVar, true}; }
  static Policy forced(inverter::Mode m, bool free_setting = false) { return {Kind::Forced, m, free_setting}; }
  std::string label() const;
};

struct DerUnit {
  std::size_t node = 0;  ///< feeder node index
  inverter::InverterSpec spec;
  double p_available = 0.0;  ///< pu, <= spec.p_max
};

struct DispatchContext {
  const feeder::FeederModel* feeder = nullptr;
  feeder::SensitivityBlocks blocks;
  feeder::PartitionedBlocks part;
  feeder::Coupling coupling;  ///< current K1, C2 (estimated or exact)
  std::vector<DerUnit> ders;
  inverter::StandardProfile profile;
  double v_lo = 0.95;
  double v_hi = 1.05;
  inverter::Encoding encoding = inverter::Encoding::Sos1;
  Policy policy;
  double q_export_bias = 0.0;  ///< plant-minus-model correction added to the substation Q expression
  milp::Options solver;

  std::size_t der_count() const { return ders.size(); }
};

/// Builds blocks, partition and exact coupling from the feeder. DERs take
/// their specs from `specs` by inverter id, with p_available = scale * p_max.
DispatchContext make_context(const feeder::FeederModel& feeder, const std::vector<inverter::InverterSpec>& specs,
                             const inverter::StandardProfile& profile, double irradiance = 1.0);

/// Linear substation export Q as constant + sum a_i P_i + sum b_i Q_i over DERs.
struct ExportSensitivity {
  double q0 = 0.0;
  std::vector<double> dq_dp;
  std::vector<double> dq_dq;
  double p0 = 0.0;
  std::vector<double> dp_dp;
  std::vector<double> dp_dq;
};
ExportSensitivity export_sensitivity(const DispatchContext& ctx);

/// Variable handles of an assembled stage model.
struct StageModel {
  milp::Model model;
  struct Der {
    std::size_t p, q, v;
    std::vector<inverter::DroopEncoding> encodings;
    std::vector<inverter::DroopCurve> curves;
  };
  std::vector<Der> ders;
  std::vector<std::size_t> y_obs;  ///< per observable node
  std::size_t q_sub = 0;           ///< modeled substation export Q (bias included)
  std::vector<inverter::ModeSelection> selections;
};

StageModel build_stage_model(const DispatchContext& ctx);

struct StageStats {
  std::string stage;
  double objective = 0.0;
  std::uint64_t nodes = 0;
  std::uint64_t simplex_iterations = 0;
  double wall_ms = 0.0;
};

struct DerSetpoint {
  std::string id;
  std::string node;
  std::optional<inverter::Mode> mode;  ///< empty under PQ-free
  std::size_t segment = 0;             ///< 0-based within the mode's curve
  double setting = 0.0;
  double p = 0.0;
  double q = 0.0;
  double v = 0.0;
  std::optional<inverter::DroopCurve> curve;  ///< curve at the chosen setting
};

struct DispatchResult {
  std::vector<DerSetpoint> ders;
  double p_star = 0.0;
  double q_lo = 0.0;
  double q_hi = 0.0;
  double q_sub = 0.0;  ///< modeled substation export Q of this dispatch
  std::vector<double> y_obs;
  std::vector<StageStats> stats;
};

/// Maximizes total DER real power. Throws InfeasibleStage.
DispatchResult stage1_max_power(const DispatchContext& ctx);

/// Min and max modeled substation Q at total real power p_star.
DispatchResult stage2a_aggregate(const DispatchContext& ctx, double p_star);

/// w_i = 1 - s_i / sum_j s_j with s_i the finite-difference sensitivity of the
/// substation export Q to DER i's reactive injection (step 1e-4 pu).
/// Throws DegenerateSensitivity when sum_j s_j <= 0.
std::vector<double> sensitivity_weights(const DispatchContext& ctx);

/// Minimizes sum w_i |Q_i| subject to substation Q = q_req and total P = p_star.
DispatchResult stage2b_disaggregate(const DispatchContext& ctx, double p_star, double q_req);

/// Stage 1 followed by both stage 2a solves.
DispatchResult aggregate(const DispatchContext& ctx);

/// Net injections per node for a dispatch (zero where there is no DER).
void node_injections(const DispatchContext& ctx, const DispatchResult& r, std::vector<double>& pg,
                     std::vector<double>& qg);

/// Largest deviation of any setpoint from its reported droop segment and
/// capability rows (0 for a compliant dispatch).
double compliance_error(const DispatchContext& ctx, const DispatchResult& r);

}  // namespace gridcoord::dispatch
