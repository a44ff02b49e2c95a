// Backward/forward sweep on the full unbalanced branch-flow equations.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gridcoord/error.hpp"
#include "gridcoord/feeder.hpp"

namespace gridcoord::feeder {

OracleResult bfm_oracle(const FeederModel& model, std::span<const double> p_gen, std::span<const double> q_gen,
                        double tol, int max_sweeps) {
  const std::size_t n = model.node_count();
  if (p_gen.size() != n || q_gen.size() != n) throw Error(ErrorKind::DimensionMismatch, "bfm_oracle");

  constexpr double deg = std::numbers::pi / 180.0;
  const std::array<double, 3> angle{0.0, -120.0 * deg, 120.0 * deg};
  std::array<cplx, 3> v_sub{};
  for (std::size_t ph = 0; ph < 3; ++ph) v_sub[ph] = std::polar(std::sqrt(model.y0[ph]), angle[ph]);

  // node lookup per bus and phase, -1 when absent
  std::vector<std::array<long, 3>> node_of(model.buses.size(), {-1, -1, -1});
  for (std::size_t k = 0; k < n; ++k) node_of[model.nodes[k].bus][static_cast<std::size_t>(model.nodes[k].phase)] = static_cast<long>(k);

  struct LoadRef {
    std::size_t node;
    const ZipLoad* load;
  };
  std::vector<LoadRef> loads;
  for (const auto& l : model.loads) loads.push_back({*model.node_index(*model.bus_index(l.bus), l.phase), &l});

  std::vector<cplx> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = v_sub[static_cast<std::size_t>(model.nodes[k].phase)];

  std::vector<cplx> s_draw(n), current(n);
  OracleResult res;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    // net power drawn at each node (load minus generation)
    for (std::size_t k = 0; k < n; ++k) s_draw[k] = cplx(-p_gen[k], -q_gen[k]);
    for (const auto& lr : loads) {
      const double vm = std::abs(v[lr.node]);
      const double f = lr.load->a0 + lr.load->a1 * vm * vm + lr.load->a2 * vm;
      s_draw[lr.node] += cplx(lr.load->p * f, lr.load->q * f);
    }
    // backward: line current = own injection current + children
    for (std::size_t k = 0; k < n; ++k) current[k] = std::conj(s_draw[k] / v[k]);
    for (auto it = model.bus_order.rbegin(); it != model.bus_order.rend(); ++it) {
      const std::size_t b = *it;
      const auto parent = model.parent_bus[b];
      if (!parent || *parent == model.substation_index) continue;
      for (std::size_t ph = 0; ph < 3; ++ph) {
        const long c = node_of[b][ph];
        if (c >= 0) current[static_cast<std::size_t>(node_of[*parent][ph])] += current[static_cast<std::size_t>(c)];
      }
    }
    // forward: V_child = V_parent - Z I
    double max_dv = 0.0;
    for (std::size_t b : model.bus_order) {
      const auto parent = model.parent_bus[b];
      if (!parent) continue;
      const Line& line = model.lines[*model.parent_line[b]];
      for (std::size_t ph = 0; ph < 3; ++ph) {
        const long c = node_of[b][ph];
        if (c < 0) continue;
        cplx up = (*parent == model.substation_index) ? v_sub[ph] : v[static_cast<std::size_t>(node_of[*parent][ph])];
        for (std::size_t s = 0; s < 3; ++s) {
          const long cs = node_of[b][s];
          if (cs >= 0) up -= line.z[ph][s] * current[static_cast<std::size_t>(cs)];
        }
        max_dv = std::max(max_dv, std::abs(up - v[static_cast<std::size_t>(c)]));
        v[static_cast<std::size_t>(c)] = up;
      }
    }
    res.sweeps = sweep;
    if (!std::isfinite(max_dv)) break;
    if (max_dv < tol) {
      res.v = v;
      res.vmag.resize(n);
      for (std::size_t k = 0; k < n; ++k) res.vmag[k] = std::abs(v[k]);
      // Recompute injections at the converged voltages for the root flow.
      for (std::size_t k = 0; k < n; ++k) s_draw[k] = cplx(-p_gen[k], -q_gen[k]);
      for (const auto& lr : loads) {
        const double vm = res.vmag[lr.node];
        const double f = lr.load->a0 + lr.load->a1 * vm * vm + lr.load->a2 * vm;
        s_draw[lr.node] += cplx(lr.load->p * f, lr.load->q * f);
      }
      for (std::size_t k = 0; k < n; ++k) current[k] = std::conj(s_draw[k] / v[k]);
      for (auto it = model.bus_order.rbegin(); it != model.bus_order.rend(); ++it) {
        const std::size_t b = *it;
        const auto parent = model.parent_bus[b];
        if (!parent) continue;
        for (std::size_t ph = 0; ph < 3; ++ph) {
          const long c = node_of[b][ph];
          if (c < 0) continue;
          if (*parent == model.substation_index) {
            res.s_sub[ph] += v_sub[ph] * std::conj(current[static_cast<std::size_t>(c)]);
          } else {
            current[static_cast<std::size_t>(node_of[*parent][ph])] += current[static_cast<std::size_t>(c)];
          }
        }
      }
      return res;
    }
  }
  throw Error(ErrorKind::NoConvergence, "backward/forward sweep did not converge in " + std::to_string(max_sweeps) + " sweeps");
}

}  // namespace gridcoord::feeder
