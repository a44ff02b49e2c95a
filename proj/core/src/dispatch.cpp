#include "gridcoord/dispatch.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "gridcoord/error.hpp"

namespace gridcoord::dispatch {

using inverter::Encoding;
using inverter::Mode;
using milp::kInf;
using milp::ObjSense;
using milp::Sense;
using milp::Term;

std::string Policy::label() const {
  switch (kind) {
    case Kind::Optimized: return "Optimized";
    case Kind::PqFree: return "PQ-Free";
    case Kind::Forced: return std::string(inverter::to_string(mode)) + (free_setting ? "-setting" : "");
  }
  return "?";
}

DispatchContext make_context(const feeder::FeederModel& feeder, const std::vector<inverter::InverterSpec>& specs,
                             const inverter::StandardProfile& profile, double irradiance) {
  DispatchContext ctx;
  ctx.feeder = &feeder;
  ctx.blocks = feeder::build_sensitivity(feeder);
  ctx.part = feeder::partition_blocks(ctx.blocks, feeder::make_partition(feeder));
  std::vector<double> pu(ctx.part.n_u()), qu(ctx.part.n_u());
  for (std::size_t i = 0; i < pu.size(); ++i) {
    pu[i] = -ctx.part.p0_u[i];
    qu[i] = -ctx.part.q0_u[i];
  }
  ctx.coupling = feeder::exact_coupling(ctx.part, pu, qu);
  ctx.profile = profile;
  const auto nodes = feeder.der_nodes();
  for (std::size_t i = 0; i < feeder.ders.size(); ++i) {
    const auto& id = feeder.ders[i].inverter_id;
    const auto it = std::find_if(specs.begin(), specs.end(), [&](const auto& s) { return s.id == id; });
    if (it == specs.end()) throw Error(ErrorKind::ValidationError, "DER references unknown inverter '" + id + "'");
    DerUnit u;
    u.node = nodes[i];
    u.spec = *it;
    u.p_available = std::clamp(irradiance, 0.0, 1.0) * it->p_max;
    ctx.ders.push_back(u);
  }
  return ctx;
}

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

struct ExportEval {
  double p, q;
};

ExportEval eval_export(const DispatchContext& ctx, const std::vector<double>& pg, const std::vector<double>& qg) {
  const auto y = feeder::lindist_voltages(ctx.blocks, pg, qg);
  const auto f = feeder::line_flows(ctx.blocks, y, pg, qg);
  return {f.p_export, f.q_export};
}

std::size_t observable_position(const DispatchContext& ctx, std::size_t node) {
  const auto& obs = ctx.part.partition.observable;
  const auto it = std::lower_bound(obs.begin(), obs.end(), node);
  if (it == obs.end() || *it != node)
    throw Error(ErrorKind::InvalidPartition, "DER node " + ctx.feeder->node_id(node) + " is not observable");
  return static_cast<std::size_t>(it - obs.begin());
}

// Y_o as an affine function of DER injections: y = base + gp * P + gq * Q.
struct ObservableMap {
  std::vector<double> base;
  std::vector<std::vector<double>> gp, gq;  // per DER, length n_o
};

ObservableMap observable_map(const DispatchContext& ctx) {
  const std::size_t no = ctx.part.n_o();
  std::vector<double> po(no), qo(no);
  for (std::size_t i = 0; i < no; ++i) {
    po[i] = -ctx.part.p0_o[i];
    qo[i] = -ctx.part.q0_o[i];
  }
  ObservableMap m;
  m.base = feeder::observable_voltages(ctx.part, po, qo, ctx.coupling.k1, ctx.coupling.c2);
  for (const auto& d : ctx.ders) {
    const std::size_t k = observable_position(ctx, d.node);
    auto col = [&](std::vector<double>& inj) {
      inj[k] += 1.0;
      auto y = feeder::observable_voltages(ctx.part, po, qo, ctx.coupling.k1, ctx.coupling.c2);
      inj[k] -= 1.0;
      for (std::size_t i = 0; i < no; ++i) y[i] -= m.base[i];
      return y;
    };
    m.gp.push_back(col(po));
    m.gq.push_back(col(qo));
  }
  return m;
}

}  // namespace

ExportSensitivity export_sensitivity(const DispatchContext& ctx) {
  const std::size_t n = ctx.blocks.y0.size();
  std::vector<double> pg(n, 0.0), qg(n, 0.0);
  const ExportEval base = eval_export(ctx, pg, qg);
  ExportSensitivity s;
  s.q0 = base.q;
  s.p0 = base.p;
  for (const auto& d : ctx.ders) {
    pg[d.node] = 1.0;
    const ExportEval ep = eval_export(ctx, pg, qg);
    pg[d.node] = 0.0;
    qg[d.node] = 1.0;
    const ExportEval eq = eval_export(ctx, pg, qg);
    qg[d.node] = 0.0;
    s.dp_dp.push_back(ep.p - base.p);
    s.dq_dp.push_back(ep.q - base.q);
    s.dp_dq.push_back(eq.p - base.p);
    s.dq_dq.push_back(eq.q - base.q);
  }
  return s;
}

StageModel build_stage_model(const DispatchContext& ctx) {
  if (ctx.feeder == nullptr) throw Error(ErrorKind::ValidationError, "dispatch context without feeder");
  StageModel sm;
  milp::Model& m = sm.model;
  const auto y0 = ctx.blocks.y0;
  const double ylo = ctx.v_lo * ctx.v_lo;
  const double yhi = ctx.v_hi * ctx.v_hi;

  const auto& obs = ctx.part.partition.observable;
  for (std::size_t i = 0; i < obs.size(); ++i) sm.y_obs.push_back(m.add_variable("y." + ctx.feeder->node_id(obs[i]), ylo, yhi));

  const ObservableMap om = observable_map(ctx);
  const ExportSensitivity es = export_sensitivity(ctx);
  sm.q_sub = m.add_variable("q_sub", -kInf, kInf);

  std::vector<std::vector<Term>> y_rows(obs.size());
  std::vector<Term> q_row{{sm.q_sub, 1.0}};

  for (std::size_t i = 0; i < ctx.ders.size(); ++i) {
    const DerUnit& d = ctx.ders[i];
    const std::string tag = "der" + std::to_string(i + 1);
    const double sy0 = std::sqrt(y0[d.node]);
    const double vlo = std::max(ctx.profile.v_box_lo, feeder::voltage_from_y(ylo, y0[d.node]));
    const double vhi = std::min(ctx.profile.v_box_hi, feeder::voltage_from_y(yhi, y0[d.node]));

    StageModel::Der dv;
    dv.p = m.add_variable(tag + ".p", d.spec.p_min, std::min(d.p_available, d.spec.p_max));
    dv.q = m.add_variable(tag + ".q", d.spec.q_min, d.spec.q_max);
    dv.v = m.add_variable(tag + ".v", vlo, vhi);

    for (const auto& row : inverter::capability_constraints(d.spec)) {
      std::vector<Term> t;
      if (row.cp != 0.0) t.push_back({dv.p, row.cp});
      if (row.cq != 0.0) t.push_back({dv.q, row.cq});
      if (std::isfinite(row.hi)) m.add_constraint(tag + ".cap." + row.name + ".hi", t, Sense::LessEqual, row.hi);
      if (std::isfinite(row.lo)) m.add_constraint(tag + ".cap." + row.name + ".lo", t, Sense::GreaterEqual, row.lo);
    }

    // terminal voltage from the squared magnitude at the DER node
    const std::size_t k = observable_position(ctx, d.node);
    m.add_constraint(tag + ".vlink", {{dv.v, 1.0}, {sm.y_obs[k], -1.0 / (2.0 * sy0)}}, Sense::Equal, sy0 / 2.0);

    for (std::size_t j = 0; j < obs.size(); ++j) {
      if (om.gp[i][j] != 0.0) y_rows[j].push_back({dv.p, -om.gp[i][j]});
      if (om.gq[i][j] != 0.0) y_rows[j].push_back({dv.q, -om.gq[i][j]});
    }
    q_row.push_back({dv.p, -es.dq_dp[i]});
    q_row.push_back({dv.q, -es.dq_dq[i]});

    std::vector<Mode> modes;
    if (ctx.policy.kind == Policy::Kind::Optimized) modes.assign(inverter::kAllModes.begin(), inverter::kAllModes.end());
    if (ctx.policy.kind == Policy::Kind::Forced) modes.push_back(ctx.policy.mode);
    const inverter::DerVars vars{dv.p, dv.q, dv.v};
    for (Mode mode : modes) {
      auto curve = inverter::make_default_curve(mode, d.spec, ctx.profile, d.p_available);
      if (ctx.policy.kind == Policy::Kind::Forced && !ctx.policy.free_setting)
        curve.setting_lo = curve.setting_hi = curve.setting_default;
      dv.encodings.push_back(ctx.encoding == Encoding::BigM ? inverter::encode_bigM(m, curve, vars, tag)
                                                            : inverter::encode_sos1(m, curve, vars, tag));
      dv.curves.push_back(std::move(curve));
    }
    if (!dv.encodings.empty()) sm.selections.push_back(inverter::mode_exclusivity(m, dv.encodings, tag));
    sm.ders.push_back(std::move(dv));
  }

  for (std::size_t j = 0; j < obs.size(); ++j) {
    y_rows[j].insert(y_rows[j].begin(), Term{sm.y_obs[j], 1.0});
    m.add_constraint("ylin." + ctx.feeder->node_id(obs[j]), std::move(y_rows[j]), Sense::Equal, om.base[j]);
  }
  m.add_constraint("qsub", std::move(q_row), Sense::Equal, es.q0 + ctx.q_export_bias);
  return sm;
}

namespace {

std::vector<Term> sum_of(const StageModel& sm, std::size_t StageModel::Der::*field) {
  std::vector<Term> t;
  for (const auto& d : sm.ders) t.push_back({d.*field, 1.0});
  return t;
}

// Total real power pinned to p_star, with a relative slack of the solver's
// feasibility tolerance so the stage-1 optimum stays representable.
void pin_total_power(StageModel& sm, double p_star, double tol) {
  const double band = tol * std::max(1.0, std::abs(p_star));
  sm.model.add_constraint("ptotal.hi", sum_of(sm, &StageModel::Der::p), Sense::LessEqual, p_star);
  sm.model.add_constraint("ptotal.lo", sum_of(sm, &StageModel::Der::p), Sense::GreaterEqual, p_star - band);
}

milp::Solution solve_stage(const DispatchContext& ctx, const StageModel& sm, const std::string& stage,
                           std::vector<StageStats>& stats) {
  const auto t0 = std::chrono::steady_clock::now();
  milp::Solution sol = milp::solve_milp(sm.model, ctx.solver);
  const double ms = elapsed_ms(t0);
  if (sol.status == milp::Status::Infeasible)
    throw Error(ErrorKind::InfeasibleStage, stage + " (" + ctx.policy.label() + ") is infeasible");
  if (sol.status == milp::Status::Unbounded) throw Error(ErrorKind::InfeasibleStage, stage + " is unbounded");
  if (sol.values.empty()) throw Error(ErrorKind::NoConvergence, stage + " hit the solver limit without an incumbent");
  stats.push_back({stage, sol.objective, sol.nodes, sol.simplex_iterations, ms});
  return sol;
}

void fill_setpoints(const DispatchContext& ctx, const StageModel& sm, const milp::Solution& sol, DispatchResult& r) {
  r.ders.clear();
  for (std::size_t i = 0; i < sm.ders.size(); ++i) {
    const auto& dv = sm.ders[i];
    DerSetpoint sp;
    sp.id = ctx.ders[i].spec.id;
    sp.node = ctx.feeder->node_id(ctx.ders[i].node);
    sp.p = sol.values[dv.p];
    sp.q = sol.values[dv.q];
    sp.v = sol.values[dv.v];
    double best = -1.0;
    for (std::size_t e = 0; e < dv.encodings.size(); ++e) {
      const auto& enc = dv.encodings[e];
      for (std::size_t l = 0; l < enc.indicators.size(); ++l) {
        const double z = sol.values[enc.indicators[l]];
        if (z > best) {
          best = z;
          sp.mode = enc.mode;
          sp.segment = l;
          sp.setting = sol.values[enc.setting_var];
          sp.curve = inverter::with_setting(dv.curves[e], sp.setting);
        }
      }
    }
    r.ders.push_back(std::move(sp));
  }
  r.y_obs.clear();
  for (std::size_t v : sm.y_obs) r.y_obs.push_back(sol.values[v]);
  r.q_sub = sol.values[sm.q_sub];
}

}  // namespace

DispatchResult stage1_max_power(const DispatchContext& ctx) {
  StageModel sm = build_stage_model(ctx);
  sm.model.set_objective(ObjSense::Maximize, sum_of(sm, &StageModel::Der::p));
  DispatchResult r;
  const auto sol = solve_stage(ctx, sm, "stage1", r.stats);
  fill_setpoints(ctx, sm, sol, r);
  r.p_star = sol.objective;
  r.q_lo = r.q_hi = r.q_sub;
  return r;
}

DispatchResult stage2a_aggregate(const DispatchContext& ctx, double p_star) {
  StageModel sm = build_stage_model(ctx);
  pin_total_power(sm, p_star, ctx.solver.feas_tol);
  DispatchResult r;
  r.p_star = p_star;
  sm.model.set_objective(ObjSense::Minimize, {{sm.q_sub, 1.0}});
  const auto lo = solve_stage(ctx, sm, "stage2a.min", r.stats);
  r.q_lo = lo.objective;
  sm.model.set_objective(ObjSense::Maximize, {{sm.q_sub, 1.0}});
  const auto hi = solve_stage(ctx, sm, "stage2a.max", r.stats);
  r.q_hi = hi.objective;
  fill_setpoints(ctx, sm, hi, r);
  return r;
}

std::vector<double> sensitivity_weights(const DispatchContext& ctx) {
  constexpr double kStep = 1e-4;
  const std::size_t n = ctx.blocks.y0.size();
  std::vector<double> pg(n, 0.0), qg(n, 0.0);
  const double base = eval_export(ctx, pg, qg).q;
  std::vector<double> s;
  double total = 0.0;
  for (const auto& d : ctx.ders) {
    qg[d.node] = kStep;
    s.push_back((eval_export(ctx, pg, qg).q - base) / kStep);
    qg[d.node] = 0.0;
    total += s.back();
  }
  if (s.empty()) return s;
  if (!(total > 0.0)) throw Error(ErrorKind::DegenerateSensitivity, "sum of substation Q sensitivities is not positive");
  for (double& v : s) v = 1.0 - v / total;
  return s;
}

DispatchResult stage2b_disaggregate(const DispatchContext& ctx, double p_star, double q_req) {
  StageModel sm = build_stage_model(ctx);
  pin_total_power(sm, p_star, ctx.solver.feas_tol);
  sm.model.add_constraint("qreq", {{sm.q_sub, 1.0}}, Sense::Equal, q_req);
  const auto w = sensitivity_weights(ctx);
  std::vector<Term> obj;
  for (std::size_t i = 0; i < sm.ders.size(); ++i) {
    const auto& spec = ctx.ders[i].spec;
    const std::string tag = "der" + std::to_string(i + 1);
    const std::size_t qp = sm.model.add_variable(tag + ".q_pos", 0.0, std::max(0.0, spec.q_max));
    const std::size_t qn = sm.model.add_variable(tag + ".q_neg", 0.0, std::max(0.0, -spec.q_min));
    sm.model.add_constraint(tag + ".qsplit", {{sm.ders[i].q, 1.0}, {qp, -1.0}, {qn, 1.0}}, Sense::Equal, 0.0);
    obj.push_back({qp, w[i]});
    obj.push_back({qn, w[i]});
  }
  sm.model.set_objective(ObjSense::Minimize, std::move(obj));
  DispatchResult r;
  r.p_star = p_star;
  const auto sol = solve_stage(ctx, sm, "stage2b", r.stats);
  fill_setpoints(ctx, sm, sol, r);
  r.q_lo = r.q_hi = q_req;
  return r;
}

DispatchResult aggregate(const DispatchContext& ctx) {
  DispatchResult s1 = stage1_max_power(ctx);
  DispatchResult s2 = stage2a_aggregate(ctx, s1.p_star);
  s2.stats.insert(s2.stats.begin(), s1.stats.begin(), s1.stats.end());
  return s2;
}

void node_injections(const DispatchContext& ctx, const DispatchResult& r, std::vector<double>& pg,
                     std::vector<double>& qg) {
  const std::size_t n = ctx.blocks.y0.size();
  pg.assign(n, 0.0);
  qg.assign(n, 0.0);
  for (std::size_t i = 0; i < r.ders.size(); ++i) {
    pg[ctx.ders[i].node] += r.ders[i].p;
    qg[ctx.ders[i].node] += r.ders[i].q;
  }
}

double compliance_error(const DispatchContext& ctx, const DispatchResult& r) {
  double worst = 0.0;
  for (std::size_t i = 0; i < r.ders.size(); ++i) {
    const auto& sp = r.ders[i];
    for (const auto& row : inverter::capability_constraints(ctx.ders[i].spec)) {
      const double a = row.cp * sp.p + row.cq * sp.q;
      worst = std::max({worst, row.lo - a, a - row.hi});
    }
    if (!sp.curve || !sp.mode) continue;
    const auto& seg = sp.curve->segments[sp.segment];
    double in = sp.v, out = sp.q;
    if (*sp.mode == Mode::VoltWatt) out = sp.p;
    if (*sp.mode == Mode::WattVar) in = sp.p;
    worst = std::max({worst, seg.lo.at(sp.setting) - in, in - seg.hi.at(sp.setting)});
    worst = std::max(worst, std::abs(out - (seg.slope * in + seg.offset.at(sp.setting))));
  }
  return worst;
}

}  // namespace gridcoord::dispatch
