#include <cstdio>
#include <sstream>

#include "gridcoord/data.hpp"
#include "gridcoord/results.hpp"

namespace gridcoord::results {

std::string config_hash(const std::string& canonical_inputs) { return data::sha256_hex(canonical_inputs).substr(0, 16); }

namespace {

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

}  // namespace

json dispatch_to_json(const dispatch::DispatchContext& ctx, const dispatch::DispatchResult& r, bool with_stats) {
  const double kva = ctx.feeder->base.s_kva;
  json ders = json::array();
  for (const auto& d : r.ders) {
    json j{{"id", d.id},
           {"node", d.node},
           {"mode", d.mode ? inverter::to_string(*d.mode) : "PQ"},
           {"segment", d.mode ? static_cast<int>(d.segment) + 1 : 0},
           {"setting", d.setting},
           {"p_kw", d.p * kva},
           {"q_kvar", d.q * kva},
           {"v_pu", d.v}};
    if (d.mode == inverter::Mode::WattVar) j["setting"] = d.setting * kva;
    ders.push_back(std::move(j));
  }
  json out{{"policy", ctx.policy.label()},
           {"encoding", inverter::to_string(ctx.encoding)},
           {"p_star_kw", r.p_star * kva},
           {"q_lo_kvar", r.q_lo * kva},
           {"q_hi_kvar", r.q_hi * kva},
           {"q_sub_kvar", r.q_sub * kva},
           {"ders", ders}};
  if (with_stats) {
    json stats = json::array();
    for (const auto& s : r.stats)
      stats.push_back({{"stage", s.stage}, {"objective", s.objective}, {"nodes", s.nodes},
                       {"simplex_iterations", s.simplex_iterations}});
    out["solver"] = stats;
  }
  return out;
}

std::string voltages_csv(const feeder::FeederModel& model, const std::vector<double>& vmag, const std::string& hash) {
  std::ostringstream os;
  os << "# config " << hash << "\n";
  os << "bus_phase,v_pu,y_pu2\n";
  for (std::size_t i = 0; i < vmag.size(); ++i)
    os << model.node_id(i) << "," << fmt(vmag[i], 8) << "," << fmt(vmag[i] * vmag[i], 8) << "\n";
  return os.str();
}

std::string trace_csv(const coordinate::CoordinationResult& r, const std::string& hash, bool with_timing) {
  std::ostringstream os;
  os << "# config " << hash << "\n";
  os << "iter,interface_bus,q_lo,q_hi,q_req,q_meas,p_star,stage_ms,decision\n";
  for (const auto& it : r.trace)
    for (const auto& f : it.feeders)
      os << it.iter << "," << f.interface_bus << "," << fmt(f.q_lo_kvar, 3) << "," << fmt(f.q_hi_kvar, 3) << ","
         << fmt(f.q_req_kvar, 3) << "," << fmt(f.q_meas_kvar, 3) << "," << fmt(f.p_star_kw, 3) << ","
         << fmt(with_timing ? f.stage_ms : 0.0, 1) << "," << coordinate::to_string(f.decision) << "\n";
  return os.str();
}

json timings_json(const coordinate::CoordinationResult& r) {
  json iters = json::array();
  for (const auto& it : r.trace) {
    json fs = json::array();
    for (const auto& f : it.feeders) fs.push_back({{"interface_bus", f.interface_bus}, {"stage_ms", f.stage_ms}});
    iters.push_back({{"iter", it.iter}, {"wall_ms", it.wall_ms}, {"feeders", fs}});
  }
  return {{"total_ms", r.wall_ms}, {"iterations", iters}};
}

}  // namespace gridcoord::results
