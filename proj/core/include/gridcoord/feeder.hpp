#pragma once

// Multiphase radial feeder: data model, LinDist3Flow sensitivities with ZIP
// loads, the observable/unobservable partition, and a nonlinear
// backward/forward sweep used as a validation oracle and plant emulator.
//
// All internal quantities are per-unit. Powers are per phase on the base
// `s_kva` (single-phase kVA), voltages on the line-to-neutral base `v_kv`.
// Voltage-like vectors hold squared magnitudes Y = |V|^2.
//
// Bus-phase ("node") flattening: buses in file order, phases a,b,c within a
// bus, substation excluded. Every node-indexed vector and matrix below uses
// this order; line-phase quantities are indexed by their downstream node.

#include <array>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridcoord/numkit.hpp"

namespace gridcoord::feeder {

using numkit::Matrix;
using cplx = std::complex<double>;
using Impedance3 = std::array<std::array<cplx, 3>, 3>;

inline constexpr int kPhaseCount = 3;
char phase_letter(int phase);
int phase_from_letter(char c);

struct Base {
  double s_kva = 1000.0;  ///< single-phase power base
  double v_kv = 2.4018;   ///< line-to-neutral voltage base
  double z_ohm() const { return v_kv * v_kv * 1000.0 / s_kva; }
};

struct Bus {
  std::string id;
  std::array<bool, 3> phases{};
};

struct Line {
  std::string from;
  std::string to;
  Impedance3 z{};  ///< per-unit series impedance (phases absent on `to` ignored)
};

struct ZipLoad {
  std::string bus;
  int phase = 0;
  double p = 0.0;  ///< nominal real power, pu
  double q = 0.0;  ///< nominal reactive power, pu
  double a0 = 1.0, a1 = 0.0, a2 = 0.0;
};

struct DerPlacement {
  std::string bus;
  int phase = 0;
  std::string inverter_id;
};

struct Node {
  std::size_t bus = 0;  ///< index into FeederModel::buses
  int phase = 0;
};

struct FeederModel {
  Base base;
  std::string substation;
  std::array<double, 3> y0{1.0, 1.0, 1.0};
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<ZipLoad> loads;
  std::vector<DerPlacement> ders;
  std::vector<std::string> observable;  ///< "bus.phase" ids, e.g. "634.a"

  // Derived by finalize().
  std::size_t substation_index = 0;
  std::vector<Node> nodes;
  std::vector<std::optional<std::size_t>> parent_bus;   ///< per bus
  std::vector<std::optional<std::size_t>> parent_line;  ///< per bus
  std::vector<std::size_t> bus_order;                   ///< BFS order from substation

  /// Validates the topology and fills the derived fields. Throws
  /// ValidationError on non-radial graphs, phase mismatches, bad ZIP sums,
  /// dangling DERs or unknown observable ids.
  void finalize();

  std::size_t node_count() const { return nodes.size(); }
  std::optional<std::size_t> bus_index(const std::string& id) const;
  std::optional<std::size_t> node_index(std::size_t bus, int phase) const;
  std::optional<std::size_t> node_index(const std::string& bus_phase_id) const;
  std::string node_id(std::size_t node) const;
  std::vector<std::size_t> substation_phases() const;
  /// Squared substation voltage seen by every node (Y0 broadcast along phases).
  std::vector<double> y0_per_node() const;
  std::vector<std::size_t> der_nodes() const;
};

/// Voltage-dependent load split into the affine form used by the linear
/// model: consumption = c0 + c1 * Y per node, for real and reactive parts.
struct NodalLoads {
  std::vector<double> p0, p1, q0, q1;
};
NodalLoads linearized_loads(const FeederModel& model);

struct Connectivity {
  Matrix m0;  ///< line-phase x substation-phase
  Matrix m;   ///< node x line-phase
};

struct Equivalents {
  Matrix req;
  Matrix xeq;
};

struct SensitivityBlocks {
  Matrix m0, m;
  Matrix zp, zq;  ///< block-diagonal line-phase coupling matrices
  Matrix req, xeq;
  Matrix k;
  std::vector<double> y0;  ///< per node
  NodalLoads loads;
};

/// Rows of [M0 M^T][Y0; Y] give Y_from - Y_to per line-phase.
Connectivity build_connectivity(const FeederModel& model);

/// Phase-coupled Z^P, Z^Q of each line. With unit phasor ratios
/// g(f,s) = exp(j(theta_f - theta_s)), theta = (0, -120, +120) deg:
///   Y_from,f - Y_to,f = sum_s [2 Re(Z_fs conj g(f,s)) P_s + 2 Im(Z_fs conj g(f,s)) Q_s]
/// where P_s, Q_s are downstream line flows. Diagonal entries reduce to 2r, 2x.
std::pair<Matrix, Matrix> build_line_coupling(const FeederModel& model);

/// R_eq = M^{-T} Z^P M^{-1}, X_eq = M^{-T} Z^Q M^{-1}.
Equivalents build_equivalents(const FeederModel& model, const Connectivity& conn);

/// K = I + R_eq D(P^L (A1 + A2/(2 sqrt Y0))) + X_eq D(Q^L (A1 + A2/(2 sqrt Y0))).
Matrix build_K(const FeederModel& model, const Equivalents& eq);

SensitivityBlocks build_sensitivity(const FeederModel& model);

/// Solves K Y = Y0 + R_eq (P^G - c0_p) + X_eq (Q^G - c0_q) for Y.
std::vector<double> lindist_voltages(const SensitivityBlocks& blocks, std::span<const double> p_gen,
                                     std::span<const double> q_gen);

/// First-order magnitude estimate V = Y/(2 sqrt Y0) + sqrt(Y0)/2.
double voltage_from_y(double y, double y0);

struct LineFlows {
  std::vector<double> p;  ///< downstream flow per line-phase (indexed by child node)
  std::vector<double> q;
  double p_export = 0.0;  ///< net feeder injection into the substation (= sum of nodal injections)
  double q_export = 0.0;
};
LineFlows line_flows(const SensitivityBlocks& blocks, std::span<const double> y, std::span<const double> p_gen,
                     std::span<const double> q_gen);

struct OracleResult {
  std::vector<cplx> v;          ///< node voltage phasors
  std::vector<double> vmag;     ///< node voltage magnitudes
  std::array<cplx, 3> s_sub{};  ///< power delivered by the substation into the feeder per phase
  int sweeps = 0;
  double p_export() const { return -(s_sub[0].real() + s_sub[1].real() + s_sub[2].real()); }
  double q_export() const { return -(s_sub[0].imag() + s_sub[1].imag() + s_sub[2].imag()); }
};

/// Unbalanced nonlinear backward/forward sweep with ZIP loads at actual |V|.
/// Throws NoConvergence after `max_sweeps`.
OracleResult bfm_oracle(const FeederModel& model, std::span<const double> p_gen, std::span<const double> q_gen,
                        double tol = 1e-8, int max_sweeps = 100);

struct ObservablePartition {
  std::vector<std::size_t> observable;
  std::vector<std::size_t> unobservable;
};

/// Partition from the model's `observable` list. Throws InvalidPartition when
/// a DER node is not observable.
ObservablePartition make_partition(const FeederModel& model);
ObservablePartition make_partition(const FeederModel& model, std::vector<std::size_t> observable);

/// Superscript convention: block "xy" has rows in set x and columns in set y.
/// K blocks exclude the identity (K = I + [Koo Kou; Kuo Kuu]).
struct PartitionedBlocks {
  ObservablePartition partition;
  Matrix koo, kou, kuo, kuu;
  Matrix roo, rou, ruo, ruu;
  Matrix xoo, xou, xuo, xuu;
  std::vector<double> y0_o, y0_u;
  std::vector<double> p0_o, p0_u, q0_o, q0_u;  ///< constant load parts per side
  std::size_t n_o() const { return partition.observable.size(); }
  std::size_t n_u() const { return partition.unobservable.size(); }
};

PartitionedBlocks partition_blocks(const SensitivityBlocks& blocks, const ObservablePartition& partition);

struct Coupling {
  Matrix k1;                ///< n_o x n_u
  std::vector<double> c2;   ///< n_o
};

/// K1 = Kou (I + Kuu)^{-1}; C2 = Y0_o - K1 Y0_u + (Rou - K1 Ruu) p_u + (Xou - K1 Xuu) q_u,
/// with p_u, q_u the constant-part net injections at unobservable nodes.
Coupling exact_coupling(const PartitionedBlocks& pb, std::span<const double> p_u, std::span<const double> q_u);

/// Y_o = (I + Koo - K1 Kuo)^{-1} [(Roo - K1 Ruo) P_o + (Xoo - K1 Xuo) Q_o + C2],
/// P_o, Q_o the constant-part net injections (generation minus c0) at observable nodes.
std::vector<double> observable_voltages(const PartitionedBlocks& pb, std::span<const double> p_o,
                                        std::span<const double> q_o, const Matrix& k1, std::span<const double> c2);

/// Constant-part net injections P^G - c0 for every node.
std::vector<double> constant_injection(std::span<const double> gen, std::span<const double> c0);
std::vector<double> select(std::span<const double> v, std::span<const std::size_t> idx);

}  // namespace gridcoord::feeder
