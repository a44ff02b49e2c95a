#pragma once

// Closed-loop transmission/distribution coordination: feeders aggregate a
// reactive envelope, the TSO dispatches interface requests, feeders
// disaggregate, the field responds, and estimates are refreshed until the
// measured substation Q matches the request.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "gridcoord/dispatch.hpp"
#include "gridcoord/estimator.hpp"
#include "gridcoord/feeder.hpp"
#include "gridcoord/tso.hpp"

namespace gridcoord::coordinate {

enum class Plant { Nonlinear, Linear };

struct FeederAttachment {
  std::shared_ptr<const feeder::FeederModel> feeder;
  std::vector<inverter::InverterSpec> specs;
  inverter::StandardProfile profile;
  int interface_bus = 0;
  int multiplicity = 1;
  double irradiance = 1.0;
};

struct CoordinationConfig {
  std::vector<FeederAttachment> feeders;
  tso::TransmissionCase transmission;
  tso::TsoWeights tso_weights;
  double eps_kvar = 1.0;  ///< absolute floor
  double eps_rel = 0.01;  ///< relative to |Q_req|
  int max_iters = 10;
  inverter::Encoding encoding = inverter::Encoding::Sos1;
  estimator::RlsOptions rls;
  Plant plant = Plant::Nonlinear;
  bool freeze_exact_params = false;  ///< keep the exact K1, C2 and skip estimation
  bool parallel = true;              ///< solve feeders concurrently within an iteration

  void validate() const;
};

/// Reads a scenario config; relative paths resolve against the file's folder.
CoordinationConfig load_config(const std::filesystem::path& path);

enum class Decision { Converged, Resend, Redisaggregate };
const char* to_string(Decision d);

/// Resend when q_req lies outside [q_lo, q_hi]; Redisaggregate when inside
/// but |q_req - q_meas| >= eps; Converged otherwise.
Decision check_convergence(double q_req, double q_meas, double q_lo, double q_hi, double eps);

struct FieldResult {
  estimator::MeasurementSample sample;
  double q_meas = 0.0;  ///< substation export, pu
  double p_meas = 0.0;
  std::vector<double> p_der;  ///< realized DER outputs
  std::vector<double> q_der;
  std::vector<double> v_der;
  int rounds = 0;
};

/// Applies each DER's mode and setting and iterates the network and the
/// droop responses to a common fixed point (<= 50 rounds, tol 1e-6 pu).
/// Throws NoConvergence when the responses keep oscillating.
FieldResult simulate_field(const dispatch::DispatchContext& ctx, const dispatch::DispatchResult& d,
                           Plant plant = Plant::Nonlinear);

/// Field sample with every DER at fixed (P, Q) injections.
FieldResult sample_fixed(const dispatch::DispatchContext& ctx, std::span<const double> p_der,
                         std::span<const double> q_der, Plant plant = Plant::Nonlinear);

struct FeederStep {
  int interface_bus = 0;
  double q_lo_kvar = 0.0;  ///< envelope used for this iteration's request, one feeder
  double q_hi_kvar = 0.0;
  double q_req_kvar = 0.0;
  double q_meas_kvar = 0.0;
  double q_lo_new_kvar = 0.0;  ///< re-aggregated envelope
  double q_hi_new_kvar = 0.0;
  double p_star_kw = 0.0;
  double k1_norm = 0.0;
  double c2_norm = 0.0;
  double stage_ms = 0.0;
  Decision decision = Decision::Redisaggregate;
};

struct IterationTrace {
  int iter = 0;
  bool tso_run = false;
  std::vector<double> tso_q_req_mvar;
  std::vector<FeederStep> feeders;
  double wall_ms = 0.0;
};

struct CoordinationResult {
  std::vector<IterationTrace> trace;
  std::vector<dispatch::DispatchResult> final_dispatch;  ///< per feeder
  std::vector<dispatch::DispatchContext> final_context;  ///< per feeder
  bool converged = false;
  std::string status;
  double wall_ms = 0.0;
};

/// Runs the loop. The transmission case is taken to already carry each feeder
/// at its start-up export, so the TSO dispatches changes relative to it.
/// Stage errors propagate; running out of iterations returns
/// with converged = false and status "MaxItersExceeded".
CoordinationResult run_coordination(const CoordinationConfig& config);

}  // namespace gridcoord::coordinate
