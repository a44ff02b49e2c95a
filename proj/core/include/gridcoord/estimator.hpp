#pragma once

// Recursive least squares identification of the unobservable coupling
// (K1, C2) from observable injections and squared voltages.
//
// Regression form, rows = observable nodes:
//   psi = Roo P + Xoo Q - (I + Koo) Y
//   u   = Ruo P + Xuo Q - Kuo Y                       (length n_u)
//   psi = K1 u - C2 = [u^T (x) I, -I] [vec(K1); C2]
// so theta holds vec(K1) column-major followed by C2 itself.
// P and Q are net injections without the voltage-dependent load part.

#include <filesystem>
#include <string>
#include <vector>

#include "gridcoord/feeder.hpp"
#include "gridcoord/numkit.hpp"

namespace gridcoord::estimator {

using numkit::Matrix;

struct MeasurementSample {
  double t = 0.0;
  std::vector<double> p_o;
  std::vector<double> q_o;
  std::vector<double> y_o;
};

struct RlsState {
  std::vector<double> theta;
  Matrix cov;
  double lambda = 0.98;
  std::size_t n_o = 0;
  std::size_t n_u = 0;
  std::size_t samples = 0;
};

struct RlsOptions {
  double lambda = 0.98;
  double p0_scale = 1e4;
};

/// K1 = 0 and C2 fitted to the first sample; covariance p0_scale * I.
/// Throws DimensionMismatch, ValidationError for lambda outside (0, 1].
RlsState init_state(const feeder::PartitionedBlocks& pb, const MeasurementSample& first, const RlsOptions& opt = {});

struct Regressor {
  std::vector<double> psi;
  Matrix phi;
};
Regressor build_regressor(const MeasurementSample& s, const feeder::PartitionedBlocks& pb);

/// One gain/update/covariance step. Throws SingularInnovation.
void rls_update(RlsState& state, const Regressor& r);

feeder::Coupling extract_params(const RlsState& state);
std::vector<double> pack_params(const feeder::Coupling& c);

/// psi - Phi theta for the current estimate.
std::vector<double> residual(const RlsState& state, const Regressor& r);

/// Rows `t, bus_phase, p_pu, q_pu, y_pu2`, optional header. Samples follow
/// timestamp order of first appearance; each must cover every observable node.
std::vector<MeasurementSample> load_measurements(const std::filesystem::path& path, const feeder::FeederModel& model,
                                                 const feeder::ObservablePartition& partition);

}  // namespace gridcoord::estimator
