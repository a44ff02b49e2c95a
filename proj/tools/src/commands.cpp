#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "gridcoord/error.hpp"

namespace gridcoord::cli {

using dispatch::Policy;
using inverter::Mode;

namespace {

double kilo(const dispatch::DispatchContext& ctx) { return ctx.feeder->base.s_kva; }

}  // namespace

std::vector<ModeRow> compare_modes(const dispatch::DispatchContext& base, bool setting_variants) {
  std::vector<Policy> policies;
  for (Mode m : inverter::kAllModes) policies.push_back(Policy::forced(m, false));
  if (setting_variants)
    for (Mode m : inverter::kAllModes) policies.push_back(Policy::forced(m, true));
  policies.push_back(Policy::pq_free());
  policies.push_back(Policy::optimized());

  std::vector<ModeRow> rows;
  for (const auto& policy : policies) {
    ModeRow row;
    row.label = policy.label();
    row.policy = policy;
    auto ctx = base;
    ctx.policy = policy;
    try {
      const auto r = dispatch::aggregate(ctx);
      row.feasible = true;
      row.p_kw = r.p_star * kilo(ctx);
      row.q_lo_kvar = r.q_lo * kilo(ctx);
      row.q_hi_kvar = r.q_hi * kilo(ctx);
      row.compliance = dispatch::compliance_error(ctx, r);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InfeasibleStage) throw;
    }
    rows.push_back(row);
  }
  return rows;
}

std::string comparison_csv(const std::vector<ModeRow>& rows, const std::string& hash) {
  std::ostringstream os;
  os << "# config " << hash << "\n";
  os << "mode,p_max_kw,q_max_kvar,q_min_kvar\n";
  for (const auto& r : rows) {
    if (r.feasible)
      os << fmt::format("{},{:.4f},{:.4f},{:.4f}\n", r.label, r.p_kw, r.q_hi_kvar, r.q_lo_kvar);
    else
      os << r.label << ",infeasible,infeasible,infeasible\n";
  }
  return os.str();
}

std::string comparison_text(const std::vector<ModeRow>& rows) {
  std::ostringstream os;
  os << fmt::format("{:<20}{:>14}{:>14}{:>14}\n", "mode", "P max [kW]", "Q max [kvar]", "Q min [kvar]");
  for (const auto& r : rows) {
    if (r.feasible)
      os << fmt::format("{:<20}{:>14.1f}{:>14.1f}{:>14.1f}\n", r.label, r.p_kw, r.q_hi_kvar, r.q_lo_kvar);
    else
      os << fmt::format("{:<20}{:>14}{:>14}{:>14}\n", r.label, "infeasible", "-", "-");
  }
  return os.str();
}

feeder::FeederModel with_der_count(const feeder::FeederModel& model, std::size_t count) {
  if (model.ders.empty()) throw Error(ErrorKind::ValidationError, "feeder has no DER sites to replicate");
  feeder::FeederModel out = model;
  out.ders.clear();
  for (std::size_t i = 0; i < count; ++i) out.ders.push_back(model.ders[i % model.ders.size()]);
  out.finalize();
  return out;
}

std::vector<BenchCell> bench_sweep(const feeder::FeederModel& model, const std::vector<inverter::InverterSpec>& specs,
                                   const inverter::StandardProfile& profile, double irradiance,
                                   const std::vector<std::size_t>& der_counts,
                                   const std::vector<inverter::Encoding>& encodings, std::uint64_t node_limit) {
  std::vector<BenchCell> cells;
  for (std::size_t n : der_counts) {
    const auto sized = with_der_count(model, n);
    for (auto enc : encodings) {
      auto ctx = dispatch::make_context(sized, specs, profile, irradiance);
      ctx.encoding = enc;
      ctx.solver.node_limit = node_limit;
      const std::string name = inverter::to_string(enc);
      auto record = [&](const std::vector<dispatch::StageStats>& stats) {
        for (const auto& s : stats) {
          BenchCell c{name, n, s.stage, s.wall_ms, s.simplex_iterations, s.nodes, "ok"};
          if (s.nodes >= node_limit) c.status = "node_limit";
          cells.push_back(c);
        }
      };
      try {
        const auto agg = dispatch::aggregate(ctx);
        record(agg.stats);
        const auto dis = dispatch::stage2b_disaggregate(ctx, agg.p_star, 0.5 * (agg.q_lo + agg.q_hi));
        record(dis.stats);
      } catch (const Error& e) {
        cells.push_back({name, n, "failed", 0.0, 0, 0, to_string(e.kind())});
      }
    }
  }
  return cells;
}

std::string bench_csv(const std::vector<BenchCell>& cells) {
  std::ostringstream os;
  os << "encoding,der_count,stage,wall_ms,simplex_iterations,nodes,status\n";
  for (const auto& c : cells)
    os << fmt::format("{},{},{},{:.3f},{},{},{}\n", c.encoding, c.der_count, c.stage, c.wall_ms, c.simplex_iterations,
                      c.nodes, c.status);
  return os.str();
}

BenchTotal bench_total(const std::vector<BenchCell>& cells, const std::string& encoding, std::size_t der_count) {
  BenchTotal t;
  for (const auto& c : cells) {
    if (c.encoding != encoding || c.der_count != der_count) continue;
    t.wall_ms += c.wall_ms;
    t.nodes += c.nodes;
    t.simplex_iterations += c.simplex_iterations;
    if (c.status != "ok") t.complete = false;
  }
  return t;
}

}  // namespace gridcoord::cli
