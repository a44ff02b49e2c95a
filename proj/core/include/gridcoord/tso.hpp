#pragma once

// Transmission side: Newton-Raphson AC power flow on a small meshed network
// and the interface reactive-power dispatch that minimizes voltage deviation.

#include <complex>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcoord/numkit.hpp"

namespace gridcoord::tso {

enum class BusType { Slack, PV, PQ };

struct TBus {
  int id = 0;
  BusType type = BusType::PQ;
  double vm = 1.0;     ///< setpoint for slack/PV, initial guess for PQ
  double pd_mw = 0.0;
  double qd_mvar = 0.0;
};

struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b = 0.0;  ///< total line charging
};

struct Generator {
  int bus = 0;
  double p_mw = 0.0;
  double vm = 1.0;
};

/// A DSO attachment point. The envelope is the aggregate over `multiplicity`
/// identical feeders, in MVAr, positive = injection into the transmission bus.
struct Interface {
  int bus = 0;
  std::string feeder_ref;
  int multiplicity = 1;
  double q_lo_mvar = 0.0;
  double q_hi_mvar = 0.0;
};

struct TransmissionCase {
  double base_mva = 100.0;
  std::vector<TBus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> gens;
  std::vector<Interface> interfaces;
  std::optional<std::pair<int, int>> outage;  ///< branch listed for removal

  /// Throws ValidationError: not exactly one slack, disconnected graph,
  /// interface on a non-PQ bus, unknown bus ids.
  void validate() const;
  std::size_t bus_position(int id) const;
  /// Buses carrying load or generation.
  std::vector<std::size_t> monitored() const;
};

TransmissionCase case_from_json(const nlohmann::json& doc);
TransmissionCase load_case(const std::filesystem::path& path);

/// Copy of the case without the branch between `a` and `b` (either
/// orientation). Throws ValidationError if absent or if it disconnects the grid.
TransmissionCase remove_branch(const TransmissionCase& c, int a, int b);

struct BranchFlow {
  int from = 0;
  int to = 0;
  std::complex<double> s_from;  ///< pu
  std::complex<double> s_to;
};

struct PowerFlowResult {
  std::vector<double> vm;
  std::vector<double> va;  ///< radians
  std::vector<BranchFlow> flows;
  std::complex<double> s_slack;
  int iterations = 0;
  double mismatch = 0.0;
};

/// Full polar Newton-Raphson. `q_injection` (pu, per bus in case order, may
/// be empty) adds reactive injection on top of the loads. Throws
/// NoConvergence after `max_iters`, SingularJacobian on a singular Jacobian.
PowerFlowResult newton_powerflow(const TransmissionCase& c, std::span<const double> q_injection = {},
                                 int max_iters = 20, double tol = 1e-8);

/// d|V|/dQ with rows = monitored buses, columns = interface buses, from the
/// inverse of the power-flow Jacobian at the solved state.
numkit::Matrix vq_sensitivity(const TransmissionCase& c, const PowerFlowResult& state,
                              std::span<const std::size_t> monitored, std::span<const std::size_t> interface_buses);

struct TsoWeights {
  double c_v = 1.0;
  double c_q = 0.01;
  double v_setpoint = 1.0;
};

struct TsoDispatch {
  std::vector<double> q_req_mvar;  ///< per interface
  std::vector<double> vm;          ///< all buses, final power flow
  double objective = 0.0;
  std::vector<double> objective_history;  ///< per outer iteration, from full power flow
  int iterations = 0;
  double worst_deviation = 0.0;  ///< max |V - setpoint| over monitored buses
};

/// Objective sum c_v (V_k - setpoint)^2 over monitored buses plus
/// c_q Q_i^2 over interfaces (Q in pu).
double dispatch_objective(const TransmissionCase& c, const PowerFlowResult& pf, std::span<const double> q_pu,
                          const TsoWeights& w);

/// Successive linearization with projected-gradient inner solves over the
/// interface boxes. `q_lo_mvar`/`q_hi_mvar` override the case envelopes when non-empty.
TsoDispatch tso_dispatch(const TransmissionCase& c, std::span<const double> q_lo_mvar = {},
                         std::span<const double> q_hi_mvar = {}, const TsoWeights& w = {});

}  // namespace gridcoord::tso
