#include "gridcoord/feeder.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>

#include "gridcoord/error.hpp"

namespace gridcoord::feeder {

namespace {

constexpr double kZipTol = 1e-9;

double phase_angle(int phase) {
  constexpr double deg = std::numbers::pi / 180.0;
  constexpr std::array<double, 3> angles{0.0, -120.0 * deg, 120.0 * deg};
  return angles[static_cast<std::size_t>(phase)];
}

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorKind::ValidationError, msg); }

}  // namespace

char phase_letter(int phase) { return static_cast<char>('a' + phase); }

int phase_from_letter(char c) {
  if (c >= 'a' && c <= 'c') return c - 'a';
  if (c >= 'A' && c <= 'C') return c - 'A';
  return -1;
}

std::optional<std::size_t> FeederModel::bus_index(const std::string& id) const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].id == id) return i;
  return std::nullopt;
}

std::optional<std::size_t> FeederModel::node_index(std::size_t bus, int phase) const {
  for (std::size_t k = 0; k < nodes.size(); ++k)
    if (nodes[k].bus == bus && nodes[k].phase == phase) return k;
  return std::nullopt;
}

std::optional<std::size_t> FeederModel::node_index(const std::string& bus_phase_id) const {
  const auto dot = bus_phase_id.rfind('.');
  if (dot == std::string::npos || dot + 2 != bus_phase_id.size()) return std::nullopt;
  const auto b = bus_index(bus_phase_id.substr(0, dot));
  const int ph = phase_from_letter(bus_phase_id.back());
  if (!b || ph < 0) return std::nullopt;
  return node_index(*b, ph);
}

std::string FeederModel::node_id(std::size_t node) const {
  return buses[nodes[node].bus].id + "." + phase_letter(nodes[node].phase);
}

std::vector<std::size_t> FeederModel::substation_phases() const {
  std::vector<std::size_t> out;
  for (int ph = 0; ph < kPhaseCount; ++ph)
    if (buses[substation_index].phases[static_cast<std::size_t>(ph)]) out.push_back(static_cast<std::size_t>(ph));
  return out;
}

std::vector<double> FeederModel::y0_per_node() const {
  std::vector<double> out(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) out[k] = y0[static_cast<std::size_t>(nodes[k].phase)];
  return out;
}

std::vector<std::size_t> FeederModel::der_nodes() const {
  std::vector<std::size_t> out;
  out.reserve(ders.size());
  for (const auto& d : ders) {
    const auto b = bus_index(d.bus);
    out.push_back(*node_index(*b, d.phase));
  }
  return out;
}

void FeederModel::finalize() {
  if (buses.empty()) invalid("feeder has no buses");
  const auto sub = bus_index(substation);
  if (!sub) invalid("substation bus '" + substation + "' not found");
  substation_index = *sub;
  for (std::size_t i = 0; i < buses.size(); ++i)
    for (std::size_t j = i + 1; j < buses.size(); ++j)
      if (buses[i].id == buses[j].id) invalid("duplicate bus id '" + buses[i].id + "'");
  for (double y : y0)
    if (!(y > 0.0) || !std::isfinite(y)) invalid("substation y0 must be positive");

  if (lines.size() + 1 != buses.size()) {
    invalid("radial feeder needs |lines| = |buses| - 1 (" + std::to_string(lines.size()) + " lines, " +
            std::to_string(buses.size()) + " buses)");
  }

  std::vector<std::vector<std::size_t>> incident(buses.size());
  for (std::size_t e = 0; e < lines.size(); ++e) {
    const auto f = bus_index(lines[e].from);
    const auto t = bus_index(lines[e].to);
    if (!f || !t) invalid("line " + lines[e].from + "-" + lines[e].to + " references an unknown bus");
    if (*f == *t) invalid("self-loop at bus " + lines[e].from);
    for (const auto& row : lines[e].z)
      for (const auto& z : row)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) invalid("non-finite impedance on line " + lines[e].from + "-" + lines[e].to);
    incident[*f].push_back(e);
    incident[*t].push_back(e);
  }

  // Orient every line away from the substation.
  parent_bus.assign(buses.size(), std::nullopt);
  parent_line.assign(buses.size(), std::nullopt);
  bus_order.clear();
  std::vector<bool> seen(buses.size(), false);
  std::deque<std::size_t> queue{substation_index};
  seen[substation_index] = true;
  while (!queue.empty()) {
    const std::size_t b = queue.front();
    queue.pop_front();
    bus_order.push_back(b);
    for (std::size_t e : incident[b]) {
      const std::size_t f = *bus_index(lines[e].from);
      const std::size_t t = *bus_index(lines[e].to);
      const std::size_t other = (f == b) ? t : f;
      if (seen[other]) {
        if (parent_line[b] != e) invalid("cycle detected through bus " + buses[other].id);
        continue;
      }
      seen[other] = true;
      parent_bus[other] = b;
      parent_line[other] = e;
      queue.push_back(other);
    }
  }
  if (bus_order.size() != buses.size()) invalid("feeder graph is not connected");

  for (std::size_t b = 0; b < buses.size(); ++b) {
    if (!parent_bus[b]) continue;
    for (std::size_t ph = 0; ph < 3; ++ph)
      if (buses[b].phases[ph] && !buses[*parent_bus[b]].phases[ph])
        invalid("bus " + buses[b].id + " has phase " + phase_letter(static_cast<int>(ph)) + " missing upstream");
  }

  nodes.clear();
  for (std::size_t b = 0; b < buses.size(); ++b) {
    if (b == substation_index) continue;
    for (int ph = 0; ph < kPhaseCount; ++ph)
      if (buses[b].phases[static_cast<std::size_t>(ph)]) nodes.push_back({b, ph});
  }

  for (const auto& l : loads) {
    if (std::abs(l.a0 + l.a1 + l.a2 - 1.0) > kZipTol) invalid("ZIP coefficients at " + l.bus + " do not sum to 1");
    const auto b = bus_index(l.bus);
    if (!b || *b == substation_index || l.phase < 0 || !node_index(*b, l.phase))
      invalid("load at unknown bus-phase " + l.bus);
    if (!std::isfinite(l.p) || !std::isfinite(l.q)) invalid("non-finite load at " + l.bus);
  }
  for (const auto& d : ders) {
    const auto b = bus_index(d.bus);
    if (!b || *b == substation_index || d.phase < 0 || !node_index(*b, d.phase))
      invalid("DER '" + d.inverter_id + "' at unknown bus-phase " + d.bus);
  }
  for (const auto& id : observable)
    if (!node_index(id)) invalid("observable id '" + id + "' is not a feeder bus-phase");
}

NodalLoads linearized_loads(const FeederModel& model) {
  const std::size_t n = model.node_count();
  NodalLoads out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                 std::vector<double>(n, 0.0)};
  for (const auto& l : model.loads) {
    const std::size_t k = *model.node_index(*model.bus_index(l.bus), l.phase);
    const double sy0 = std::sqrt(model.y0[static_cast<std::size_t>(l.phase)]);
    // constant-current part linearized with V ~ Y/(2 sqrt Y0) + sqrt(Y0)/2
    const double c0 = l.a0 + l.a2 * sy0 / 2.0;
    const double c1 = l.a1 + l.a2 / (2.0 * sy0);
    out.p0[k] += l.p * c0;
    out.p1[k] += l.p * c1;
    out.q0[k] += l.q * c0;
    out.q1[k] += l.q * c1;
  }
  return out;
}

Connectivity build_connectivity(const FeederModel& model) {
  const std::size_t n = model.node_count();
  const auto sub_phases = model.substation_phases();
  Connectivity c{Matrix(n, sub_phases.size()), Matrix(n, n)};
  for (std::size_t e = 0; e < n; ++e) {
    const Node& child = model.nodes[e];
    c.m(e, e) = -1.0;
    const std::size_t parent = *model.parent_bus[child.bus];
    if (parent == model.substation_index) {
      const auto it = std::find(sub_phases.begin(), sub_phases.end(), static_cast<std::size_t>(child.phase));
      c.m0(e, static_cast<std::size_t>(it - sub_phases.begin())) = 1.0;
    } else {
      c.m(*model.node_index(parent, child.phase), e) = 1.0;
    }
  }
  return c;
}

std::pair<Matrix, Matrix> build_line_coupling(const FeederModel& model) {
  const std::size_t n = model.node_count();
  Matrix zp(n, n), zq(n, n);
  for (std::size_t e = 0; e < n; ++e) {
    const Node& a = model.nodes[e];
    const Line& line = model.lines[*model.parent_line[a.bus]];
    for (std::size_t f = 0; f < n; ++f) {
      const Node& b = model.nodes[f];
      if (b.bus != a.bus) continue;
      const cplx z = line.z[static_cast<std::size_t>(a.phase)][static_cast<std::size_t>(b.phase)];
      const cplx g = std::polar(1.0, phase_angle(a.phase) - phase_angle(b.phase));
      const cplx w = z * std::conj(g);
      zp(e, f) = 2.0 * w.real();
      zq(e, f) = 2.0 * w.imag();
    }
  }
  return {zp, zq};
}

Equivalents build_equivalents(const FeederModel& model, const Connectivity& conn) {
  const auto [zp, zq] = build_line_coupling(model);
  // M^{-T} Z M^{-1} = (M^{-T}) (Z M^{-1}); M^{-1} via solve.
  const Matrix minv = numkit::inverse(conn.m);
  const Matrix minv_t = minv.transposed();
  return {minv_t * zp * minv, minv_t * zq * minv};
}

Matrix build_K(const FeederModel& model, const Equivalents& eq) {
  const NodalLoads loads = linearized_loads(model);
  const std::size_t n = model.node_count();
  Matrix k = Matrix::identity(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) k(i, j) += eq.req(i, j) * loads.p1[j] + eq.xeq(i, j) * loads.q1[j];
  if (!k.all_finite()) throw Error(ErrorKind::SingularMatrix, "K has non-finite entries");
  return k;
}

SensitivityBlocks build_sensitivity(const FeederModel& model) {
  const Connectivity conn = build_connectivity(model);
  const Equivalents eq = build_equivalents(model, conn);
  auto [zp, zq] = build_line_coupling(model);
  SensitivityBlocks s;
  s.m0 = conn.m0;
  s.m = conn.m;
  s.zp = std::move(zp);
  s.zq = std::move(zq);
  s.k = build_K(model, eq);
  s.req = eq.req;
  s.xeq = eq.xeq;
  s.y0 = model.y0_per_node();
  s.loads = linearized_loads(model);
  // Fail early on a pathological K rather than inside every later solve.
  (void)numkit::solve_linear(s.k, std::span<const double>(s.y0));
  return s;
}

std::vector<double> constant_injection(std::span<const double> gen, std::span<const double> c0) {
  if (gen.size() != c0.size()) throw Error(ErrorKind::DimensionMismatch, "constant_injection");
  std::vector<double> out(gen.size());
  for (std::size_t i = 0; i < gen.size(); ++i) out[i] = gen[i] - c0[i];
  return out;
}

std::vector<double> select(std::span<const double> v, std::span<const std::size_t> idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

std::vector<double> lindist_voltages(const SensitivityBlocks& blocks, std::span<const double> p_gen,
                                     std::span<const double> q_gen) {
  const std::size_t n = blocks.y0.size();
  if (p_gen.size() != n || q_gen.size() != n) throw Error(ErrorKind::DimensionMismatch, "lindist_voltages");
  const auto p = constant_injection(p_gen, blocks.loads.p0);
  const auto q = constant_injection(q_gen, blocks.loads.q0);
  const auto rp = blocks.req * std::span<const double>(p);
  const auto xq = blocks.xeq * std::span<const double>(q);
  std::vector<double> rhs(n);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = blocks.y0[i] + rp[i] + xq[i];
  return numkit::solve_linear(blocks.k, std::span<const double>(rhs));
}

double voltage_from_y(double y, double y0) {
  const double s = std::sqrt(y0);
  return y / (2.0 * s) + s / 2.0;
}

LineFlows line_flows(const SensitivityBlocks& blocks, std::span<const double> y, std::span<const double> p_gen,
                     std::span<const double> q_gen) {
  const std::size_t n = blocks.y0.size();
  if (y.size() != n || p_gen.size() != n || q_gen.size() != n) throw Error(ErrorKind::DimensionMismatch, "line_flows");
  std::vector<double> pin(n), qin(n);
  for (std::size_t i = 0; i < n; ++i) {
    pin[i] = p_gen[i] - blocks.loads.p0[i] - blocks.loads.p1[i] * y[i];
    qin[i] = q_gen[i] - blocks.loads.q0[i] - blocks.loads.q1[i] * y[i];
  }
  LineFlows out;
  out.p = numkit::solve_linear(blocks.m, std::span<const double>(pin));
  out.q = numkit::solve_linear(blocks.m, std::span<const double>(qin));
  // Root line-phases are the rows of M0 with a nonzero entry.
  for (std::size_t e = 0; e < n; ++e) {
    bool root = false;
    for (std::size_t c = 0; c < blocks.m0.cols(); ++c) root = root || blocks.m0(e, c) != 0.0;
    if (root) {
      out.p_export -= out.p[e];
      out.q_export -= out.q[e];
    }
  }
  return out;
}

}  // namespace gridcoord::feeder

namespace gridcoord::feeder {

ObservablePartition make_partition(const FeederModel& model) {
  std::vector<std::size_t> obs;
  for (const auto& id : model.observable) obs.push_back(*model.node_index(id));
  return make_partition(model, std::move(obs));
}

ObservablePartition make_partition(const FeederModel& model, std::vector<std::size_t> observable) {
  std::sort(observable.begin(), observable.end());
  observable.erase(std::unique(observable.begin(), observable.end()), observable.end());
  ObservablePartition p;
  p.observable = std::move(observable);
  for (std::size_t k = 0; k < model.node_count(); ++k)
    if (!std::binary_search(p.observable.begin(), p.observable.end(), k)) p.unobservable.push_back(k);
  for (std::size_t d : model.der_nodes()) {
    if (!std::binary_search(p.observable.begin(), p.observable.end(), d))
      throw Error(ErrorKind::InvalidPartition, "controllable node " + model.node_id(d) + " is not observable");
  }
  return p;
}

PartitionedBlocks partition_blocks(const SensitivityBlocks& blocks, const ObservablePartition& partition) {
  const std::size_t n = blocks.y0.size();
  std::vector<bool> mark(n, false);
  for (std::size_t i : partition.observable) {
    if (i >= n || mark[i]) throw Error(ErrorKind::InvalidPartition, "observable index out of range or repeated");
    mark[i] = true;
  }
  for (std::size_t i : partition.unobservable) {
    if (i >= n || mark[i]) throw Error(ErrorKind::InvalidPartition, "sets overlap or index out of range");
    mark[i] = true;
  }
  if (!std::all_of(mark.begin(), mark.end(), [](bool b) { return b; }))
    throw Error(ErrorKind::InvalidPartition, "partition does not cover every node");

  const auto& o = partition.observable;
  const auto& u = partition.unobservable;
  Matrix kbar = blocks.k - Matrix::identity(n);
  PartitionedBlocks pb;
  pb.partition = partition;
  pb.koo = kbar.block(o, o);
  pb.kou = kbar.block(o, u);
  pb.kuo = kbar.block(u, o);
  pb.kuu = kbar.block(u, u);
  pb.roo = blocks.req.block(o, o);
  pb.rou = blocks.req.block(o, u);
  pb.ruo = blocks.req.block(u, o);
  pb.ruu = blocks.req.block(u, u);
  pb.xoo = blocks.xeq.block(o, o);
  pb.xou = blocks.xeq.block(o, u);
  pb.xuo = blocks.xeq.block(u, o);
  pb.xuu = blocks.xeq.block(u, u);
  pb.y0_o = select(blocks.y0, o);
  pb.y0_u = select(blocks.y0, u);
  pb.p0_o = select(blocks.loads.p0, o);
  pb.p0_u = select(blocks.loads.p0, u);
  pb.q0_o = select(blocks.loads.q0, o);
  pb.q0_u = select(blocks.loads.q0, u);
  return pb;
}

Coupling exact_coupling(const PartitionedBlocks& pb, std::span<const double> p_u, std::span<const double> q_u) {
  const std::size_t no = pb.n_o(), nu = pb.n_u();
  if (p_u.size() != nu || q_u.size() != nu) throw Error(ErrorKind::DimensionMismatch, "exact_coupling");
  Coupling c;
  if (nu == 0) {
    c.k1 = Matrix(no, 0);
    c.c2 = pb.y0_o;
    return c;
  }
  // K1 = Kou (I+Kuu)^{-1}  <=>  (I+Kuu)^T K1^T = Kou^T
  const Matrix iku = Matrix::identity(nu) + pb.kuu;
  c.k1 = numkit::solve_linear(iku.transposed(), pb.kou.transposed()).transposed();
  const auto k1y = c.k1 * std::span<const double>(pb.y0_u);
  const Matrix rp = pb.rou - c.k1 * pb.ruu;
  const Matrix xq = pb.xou - c.k1 * pb.xuu;
  const auto a = rp * p_u;
  const auto b = xq * q_u;
  c.c2.resize(no);
  for (std::size_t i = 0; i < no; ++i) c.c2[i] = pb.y0_o[i] - k1y[i] + a[i] + b[i];
  return c;
}

std::vector<double> observable_voltages(const PartitionedBlocks& pb, std::span<const double> p_o,
                                        std::span<const double> q_o, const Matrix& k1, std::span<const double> c2) {
  const std::size_t no = pb.n_o(), nu = pb.n_u();
  if (p_o.size() != no || q_o.size() != no || c2.size() != no || k1.rows() != no || k1.cols() != nu)
    throw Error(ErrorKind::DimensionMismatch, "observable_voltages");
  Matrix lhs = Matrix::identity(no) + pb.koo;
  Matrix r = pb.roo;
  Matrix x = pb.xoo;
  if (nu > 0) {
    lhs -= k1 * pb.kuo;
    r -= k1 * pb.ruo;
    x -= k1 * pb.xuo;
  }
  auto rhs = r * p_o;
  const auto xq = x * q_o;
  for (std::size_t i = 0; i < no; ++i) rhs[i] += xq[i] + c2[i];
  return numkit::solve_linear(lhs, std::span<const double>(rhs));
}

}  // namespace gridcoord::feeder
