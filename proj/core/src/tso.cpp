#include "gridcoord/tso.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gridcoord/error.hpp"
#include "gridcoord/io.hpp"

namespace gridcoord::tso {

using cplx = std::complex<double>;
using numkit::Matrix;

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorKind::ValidationError, msg); }

BusType parse_type(const std::string& s) {
  if (s == "slack" || s == "ref") return BusType::Slack;
  if (s == "pv" || s == "PV") return BusType::PV;
  if (s == "pq" || s == "PQ") return BusType::PQ;
  invalid("unknown bus type '" + s + "'");
}

bool connected(const TransmissionCase& c) {
  const std::size_t n = c.buses.size();
  if (n == 0) return false;
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& br : c.branches) {
    const std::size_t a = c.bus_position(br.from), b = c.bus_position(br.to);
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t v : adj[u])
      if (!seen[v]) {
        seen[v] = true;
        ++count;
        stack.push_back(v);
      }
  }
  return count == n;
}

}  // namespace

std::size_t TransmissionCase::bus_position(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].id == id) return i;
  invalid("unknown transmission bus " + std::to_string(id));
}

void TransmissionCase::validate() const {
  if (!(base_mva > 0.0)) invalid("base_mva must be positive");
  const auto slacks = std::count_if(buses.begin(), buses.end(), [](const TBus& b) { return b.type == BusType::Slack; });
  if (slacks != 1) invalid("transmission case needs exactly one slack bus");
  for (const auto& br : branches) {
    bus_position(br.from);
    bus_position(br.to);
    if (br.r == 0.0 && br.x == 0.0) invalid("branch with zero impedance");
  }
  for (const auto& g : gens) bus_position(g.bus);
  for (const auto& it : interfaces) {
    if (buses[bus_position(it.bus)].type != BusType::PQ)
      invalid("interface bus " + std::to_string(it.bus) + " is not a PQ bus");
    if (it.multiplicity < 1) invalid("interface multiplicity must be >= 1");
    if (it.q_lo_mvar > it.q_hi_mvar) invalid("interface envelope with q_lo > q_hi");
  }
  if (!connected(*this)) invalid("transmission network is not connected");
}

std::vector<std::size_t> TransmissionCase::monitored() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const bool load = buses[i].pd_mw != 0.0 || buses[i].qd_mvar != 0.0;
    const bool gen = std::any_of(gens.begin(), gens.end(), [&](const Generator& g) { return g.bus == buses[i].id; });
    if (load || gen) out.push_back(i);
  }
  return out;
}

TransmissionCase case_from_json(const nlohmann::json& doc) {
  TransmissionCase c;
  try {
    c.base_mva = doc.value("base_mva", 100.0);
    for (const auto& b : doc.at("buses")) {
      TBus bus;
      bus.id = b.at("id").get<int>();
      bus.type = parse_type(b.value("type", std::string("pq")));
      bus.vm = b.value("vm", 1.0);
      bus.pd_mw = b.value("pd_mw", 0.0);
      bus.qd_mvar = b.value("qd_mvar", 0.0);
      c.buses.push_back(bus);
    }
    for (const auto& b : doc.at("branches"))
      c.branches.push_back({b.at("from").get<int>(), b.at("to").get<int>(), b.value("r", 0.0), b.at("x").get<double>(),
                            b.value("b", 0.0)});
    if (doc.contains("gens"))
      for (const auto& g : doc.at("gens"))
        c.gens.push_back({g.at("bus").get<int>(), g.value("p_mw", 0.0), g.value("vm", 1.0)});
    if (doc.contains("interfaces"))
      for (const auto& i : doc.at("interfaces"))
        c.interfaces.push_back({i.at("bus").get<int>(), i.value("feeder_ref", std::string()), i.value("multiplicity", 1),
                                i.value("q_lo_mvar", 0.0), i.value("q_hi_mvar", 0.0)});
    if (doc.contains("remove_branch")) {
      const auto rb = doc.at("remove_branch").get<std::vector<int>>();
      if (rb.size() != 2) invalid("remove_branch must list two bus ids");
      c.outage = std::make_pair(rb[0], rb[1]);
    }
  } catch (const nlohmann::json::exception& e) {
    invalid(std::string("transmission case: ") + e.what());
  }
  for (const auto& g : c.gens) {
    auto& bus = c.buses[c.bus_position(g.bus)];
    bus.vm = g.vm;
  }
  c.validate();
  return c;
}

TransmissionCase load_case(const std::filesystem::path& path) { return case_from_json(io::read_json_file(path)); }

TransmissionCase remove_branch(const TransmissionCase& c, int a, int b) {
  TransmissionCase out = c;
  const auto it = std::find_if(out.branches.begin(), out.branches.end(), [&](const Branch& br) {
    return (br.from == a && br.to == b) || (br.from == b && br.to == a);
  });
  if (it == out.branches.end()) invalid("no branch " + std::to_string(a) + "-" + std::to_string(b));
  out.branches.erase(it);
  out.outage.reset();
  out.validate();
  return out;
}

namespace {

std::vector<std::vector<cplx>> build_ybus(const TransmissionCase& c) {
  const std::size_t n = c.buses.size();
  std::vector<std::vector<cplx>> y(n, std::vector<cplx>(n, 0.0));
  for (const auto& br : c.branches) {
    const std::size_t f = c.bus_position(br.from), t = c.bus_position(br.to);
    const cplx ys = 1.0 / cplx(br.r, br.x);
    const cplx sh(0.0, br.b / 2.0);
    y[f][f] += ys + sh;
    y[t][t] += ys + sh;
    y[f][t] -= ys;
    y[t][f] -= ys;
  }
  return y;
}

struct Injections {
  std::vector<double> p, q;
};

Injections calc_injections(const std::vector<std::vector<cplx>>& y, const std::vector<double>& vm,
                           const std::vector<double>& va) {
  const std::size_t n = vm.size();
  Injections s{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      if (y[i][k] == cplx(0.0)) continue;
      const double g = y[i][k].real(), b = y[i][k].imag(), th = va[i] - va[k];
      s.p[i] += vm[i] * vm[k] * (g * std::cos(th) + b * std::sin(th));
      s.q[i] += vm[i] * vm[k] * (g * std::sin(th) - b * std::cos(th));
    }
  return s;
}

// Unknown ordering: angles of every non-slack bus, then magnitudes of PQ buses.
struct Indexing {
  std::vector<std::size_t> ang, mag;
  std::vector<long> ang_pos, mag_pos;
};

Indexing make_indexing(const TransmissionCase& c) {
  Indexing ix;
  const std::size_t n = c.buses.size();
  ix.ang_pos.assign(n, -1);
  ix.mag_pos.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i)
    if (c.buses[i].type != BusType::Slack) {
      ix.ang_pos[i] = static_cast<long>(ix.ang.size());
      ix.ang.push_back(i);
    }
  for (std::size_t i = 0; i < n; ++i)
    if (c.buses[i].type == BusType::PQ) {
      ix.mag_pos[i] = static_cast<long>(ix.ang.size() + ix.mag.size());
      ix.mag.push_back(i);
    }
  return ix;
}

Matrix jacobian(const std::vector<std::vector<cplx>>& y, const std::vector<double>& vm, const std::vector<double>& va,
                const Injections& s, const Indexing& ix) {
  const std::size_t dim = ix.ang.size() + ix.mag.size();
  Matrix j(dim, dim);
  auto fill = [&](std::size_t row, std::size_t i, bool p_row) {
    for (std::size_t k = 0; k < vm.size(); ++k) {
      const double g = y[i][k].real(), b = y[i][k].imag(), th = va[i] - va[k];
      const double c = std::cos(th), sn = std::sin(th);
      double d_ang, d_mag;
      if (k == i) {
        d_ang = p_row ? -s.q[i] - b * vm[i] * vm[i] : s.p[i] - g * vm[i] * vm[i];
        d_mag = p_row ? s.p[i] / vm[i] + g * vm[i] : s.q[i] / vm[i] - b * vm[i];
      } else {
        if (y[i][k] == cplx(0.0)) continue;
        d_ang = p_row ? vm[i] * vm[k] * (g * sn - b * c) : -vm[i] * vm[k] * (g * c + b * sn);
        d_mag = p_row ? vm[i] * (g * c + b * sn) : vm[i] * (g * sn - b * c);
      }
      if (ix.ang_pos[k] >= 0) j(row, static_cast<std::size_t>(ix.ang_pos[k])) = d_ang;
      if (ix.mag_pos[k] >= 0) j(row, static_cast<std::size_t>(ix.mag_pos[k])) = d_mag;
    }
  };
  for (std::size_t r = 0; r < ix.ang.size(); ++r) fill(r, ix.ang[r], true);
  for (std::size_t r = 0; r < ix.mag.size(); ++r) fill(ix.ang.size() + r, ix.mag[r], false);
  return j;
}

std::vector<double> solve_jacobian(const Matrix& j, std::span<const double> rhs) {
  try {
    return numkit::solve_linear(j, rhs);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::SingularMatrix) throw Error(ErrorKind::SingularJacobian, "power-flow Jacobian is singular");
    throw;
  }
}

}  // namespace

PowerFlowResult newton_powerflow(const TransmissionCase& c, std::span<const double> q_injection, int max_iters,
                                 double tol) {
  const std::size_t n = c.buses.size();
  if (!q_injection.empty() && q_injection.size() != n)
    throw Error(ErrorKind::DimensionMismatch, "q_injection must have one entry per bus");
  const auto y = build_ybus(c);
  const Indexing ix = make_indexing(c);

  std::vector<double> p_spec(n), q_spec(n);
  for (std::size_t i = 0; i < n; ++i) {
    p_spec[i] = -c.buses[i].pd_mw / c.base_mva;
    q_spec[i] = -c.buses[i].qd_mvar / c.base_mva + (q_injection.empty() ? 0.0 : q_injection[i]);
  }
  for (const auto& g : c.gens) p_spec[c.bus_position(g.bus)] += g.p_mw / c.base_mva;

  PowerFlowResult r;
  r.vm.resize(n);
  r.va.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) r.vm[i] = c.buses[i].vm;

  const std::size_t dim = ix.ang.size() + ix.mag.size();
  for (int it = 0;; ++it) {
    const Injections s = calc_injections(y, r.vm, r.va);
    std::vector<double> f(dim);
    for (std::size_t k = 0; k < ix.ang.size(); ++k) f[k] = p_spec[ix.ang[k]] - s.p[ix.ang[k]];
    for (std::size_t k = 0; k < ix.mag.size(); ++k) f[ix.ang.size() + k] = q_spec[ix.mag[k]] - s.q[ix.mag[k]];
    r.mismatch = 0.0;
    for (double v : f) r.mismatch = std::max(r.mismatch, std::abs(v));
    if (r.mismatch < tol) {
      r.iterations = it;
      break;
    }
    if (it >= max_iters)
      throw Error(ErrorKind::NoConvergence, "Newton power flow did not converge in " + std::to_string(max_iters) +
                                                " iterations (mismatch " + std::to_string(r.mismatch) + ")");
    const auto dx = solve_jacobian(jacobian(y, r.vm, r.va, s, ix), f);
    for (std::size_t k = 0; k < ix.ang.size(); ++k) r.va[ix.ang[k]] += dx[k];
    for (std::size_t k = 0; k < ix.mag.size(); ++k) r.vm[ix.mag[k]] += dx[ix.ang.size() + k];
  }

  std::vector<cplx> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = std::polar(r.vm[i], r.va[i]);
  for (const auto& br : c.branches) {
    const std::size_t f = c.bus_position(br.from), t = c.bus_position(br.to);
    const cplx ys = 1.0 / cplx(br.r, br.x);
    const cplx sh(0.0, br.b / 2.0);
    const cplx i_f = (v[f] - v[t]) * ys + v[f] * sh;
    const cplx i_t = (v[t] - v[f]) * ys + v[t] * sh;
    r.flows.push_back({br.from, br.to, v[f] * std::conj(i_f), v[t] * std::conj(i_t)});
  }
  for (std::size_t i = 0; i < n; ++i)
    if (c.buses[i].type == BusType::Slack) {
      cplx cur = 0.0;
      for (std::size_t k = 0; k < n; ++k) cur += y[i][k] * v[k];
      r.s_slack = v[i] * std::conj(cur) + cplx(c.buses[i].pd_mw, c.buses[i].qd_mvar) / c.base_mva;
    }
  return r;
}

Matrix vq_sensitivity(const TransmissionCase& c, const PowerFlowResult& state, std::span<const std::size_t> monitored,
                      std::span<const std::size_t> interface_buses) {
  const auto y = build_ybus(c);
  const Indexing ix = make_indexing(c);
  const Injections s = calc_injections(y, state.vm, state.va);
  const Matrix j = jacobian(y, state.vm, state.va, s, ix);
  Matrix out(monitored.size(), interface_buses.size());
  const std::size_t dim = ix.ang.size() + ix.mag.size();
  for (std::size_t col = 0; col < interface_buses.size(); ++col) {
    const long pos = ix.mag_pos[interface_buses[col]];
    if (pos < 0) throw Error(ErrorKind::ValidationError, "interface bus is not a PQ bus");
    std::vector<double> rhs(dim, 0.0);
    rhs[static_cast<std::size_t>(pos)] = 1.0;
    const auto dx = solve_jacobian(j, rhs);
    for (std::size_t row = 0; row < monitored.size(); ++row) {
      const long mp = ix.mag_pos[monitored[row]];
      out(row, col) = mp >= 0 ? dx[static_cast<std::size_t>(mp)] : 0.0;
    }
  }
  return out;
}

double dispatch_objective(const TransmissionCase& c, const PowerFlowResult& pf, std::span<const double> q_pu,
                          const TsoWeights& w) {
  double f = 0.0;
  for (std::size_t k : c.monitored()) f += w.c_v * std::pow(pf.vm[k] - w.v_setpoint, 2);
  for (double q : q_pu) f += w.c_q * q * q;
  return f;
}

namespace {

double worst_dev(const TransmissionCase& c, const PowerFlowResult& pf, double vset) {
  double d = 0.0;
  for (std::size_t k : c.monitored()) d = std::max(d, std::abs(pf.vm[k] - vset));
  return d;
}

std::vector<double> bus_injection(const TransmissionCase& c, const std::vector<std::size_t>& ibus,
                                  const std::vector<double>& q) {
  std::vector<double> inj(c.buses.size(), 0.0);
  for (std::size_t i = 0; i < ibus.size(); ++i) inj[ibus[i]] += q[i];
  return inj;
}

// Projected gradient on the quadratic model around q0:
//   c_v |v0 + S (q - q0) - vset|^2 + c_q |q|^2 over the box [lo, hi].
std::vector<double> solve_box_qp(const Matrix& s, const std::vector<double>& v0, const std::vector<double>& q0,
                                 const std::vector<double>& lo, const std::vector<double>& hi, const TsoWeights& w) {
  const std::size_t m = s.rows(), n = s.cols();
  const double lip = 2.0 * (w.c_v * numkit::norm_fro(s) * numkit::norm_fro(s) + w.c_q) + 1e-12;
  std::vector<double> q = q0;
  for (std::size_t i = 0; i < n; ++i) q[i] = std::clamp(q[i], lo[i], hi[i]);
  for (int it = 0; it < 200000; ++it) {
    std::vector<double> resid(m);
    for (std::size_t r = 0; r < m; ++r) {
      double acc = v0[r] - w.v_setpoint;
      for (std::size_t k = 0; k < n; ++k) acc += s(r, k) * (q[k] - q0[k]);
      resid[r] = acc;
    }
    double step = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      double g = 2.0 * w.c_q * q[k];
      for (std::size_t r = 0; r < m; ++r) g += 2.0 * w.c_v * s(r, k) * resid[r];
      const double nq = std::clamp(q[k] - g / lip, lo[k], hi[k]);
      step = std::max(step, std::abs(nq - q[k]));
      q[k] = nq;
    }
    if (step < 1e-8) break;
  }
  return q;
}

}  // namespace

TsoDispatch tso_dispatch(const TransmissionCase& c, std::span<const double> q_lo_mvar, std::span<const double> q_hi_mvar,
                         const TsoWeights& w) {
  const std::size_t ni = c.interfaces.size();
  if ((!q_lo_mvar.empty() && q_lo_mvar.size() != ni) || (!q_hi_mvar.empty() && q_hi_mvar.size() != ni))
    throw Error(ErrorKind::DimensionMismatch, "one envelope per interface expected");
  std::vector<double> lo(ni), hi(ni);
  std::vector<std::size_t> ibus(ni);
  for (std::size_t i = 0; i < ni; ++i) {
    lo[i] = (q_lo_mvar.empty() ? c.interfaces[i].q_lo_mvar : q_lo_mvar[i]) / c.base_mva;
    hi[i] = (q_hi_mvar.empty() ? c.interfaces[i].q_hi_mvar : q_hi_mvar[i]) / c.base_mva;
    if (lo[i] > hi[i]) throw Error(ErrorKind::ValidationError, "empty interface envelope");
    ibus[i] = c.bus_position(c.interfaces[i].bus);
  }
  const auto mon = c.monitored();

  std::vector<double> q(ni);
  for (std::size_t i = 0; i < ni; ++i) q[i] = std::clamp(0.0, lo[i], hi[i]);
  PowerFlowResult pf = newton_powerflow(c, bus_injection(c, ibus, q));
  double f = dispatch_objective(c, pf, q, w);

  TsoDispatch out;
  out.objective_history.push_back(f);
  for (int outer = 0; outer < 20 && ni > 0; ++outer) {
    out.iterations = outer + 1;
    const Matrix s = vq_sensitivity(c, pf, mon, ibus);
    std::vector<double> v0(mon.size());
    for (std::size_t r = 0; r < mon.size(); ++r) v0[r] = pf.vm[mon[r]];
    const auto target = solve_box_qp(s, v0, q, lo, hi, w);

    // Backtrack toward the current point until the full power flow agrees.
    std::vector<double> cand = target;
    PowerFlowResult cand_pf;
    double cand_f = f;
    bool accepted = false;
    for (int halving = 0; halving < 30; ++halving) {
      cand_pf = newton_powerflow(c, bus_injection(c, ibus, cand));
      cand_f = dispatch_objective(c, cand_pf, cand, w);
      if (cand_f <= f + 1e-12) {
        accepted = true;
        break;
      }
      for (std::size_t i = 0; i < ni; ++i) cand[i] = q[i] + 0.5 * (cand[i] - q[i]);
    }
    double dq = 0.0;
    if (accepted) {
      for (std::size_t i = 0; i < ni; ++i) dq = std::max(dq, std::abs(cand[i] - q[i]));
      q = cand;
      pf = std::move(cand_pf);
      f = cand_f;
    }
    out.objective_history.push_back(f);
    if (!accepted || dq < 1e-4) break;
  }

  out.q_req_mvar.resize(ni);
  for (std::size_t i = 0; i < ni; ++i) out.q_req_mvar[i] = q[i] * c.base_mva;
  out.vm = pf.vm;
  out.objective = f;
  out.worst_deviation = worst_dev(c, pf, w.v_setpoint);
  return out;
}

}  // namespace gridcoord::tso
