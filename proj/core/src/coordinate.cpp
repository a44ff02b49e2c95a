#include "gridcoord/coordinate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>

#include "gridcoord/data.hpp"
#include "gridcoord/error.hpp"
#include "gridcoord/io.hpp"

namespace gridcoord::coordinate {

using dispatch::DispatchContext;
using dispatch::DispatchResult;
using inverter::Mode;

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void CoordinationConfig::validate() const {
  if (!(eps_kvar > 0.0) || !(eps_rel >= 0.0)) throw Error(ErrorKind::ValidationError, "eps must be positive");
  if (max_iters < 1) throw Error(ErrorKind::ValidationError, "max_iters must be >= 1");
  if (feeders.empty()) throw Error(ErrorKind::ValidationError, "no feeders attached");
  for (const auto& f : feeders) {
    if (!f.feeder) throw Error(ErrorKind::ValidationError, "feeder attachment without a model");
    const auto it = std::find_if(transmission.interfaces.begin(), transmission.interfaces.end(),
                                 [&](const tso::Interface& i) { return i.bus == f.interface_bus; });
    if (it == transmission.interfaces.end())
      throw Error(ErrorKind::ValidationError,
                  "feeder attached to bus " + std::to_string(f.interface_bus) + " which is not an interface");
    if (f.multiplicity < 1) throw Error(ErrorKind::ValidationError, "multiplicity must be >= 1");
  }
}

CoordinationConfig load_config(const std::filesystem::path& path) {
  const auto doc = io::read_json_file(path);
  const auto dir = path.parent_path();
  auto resolve = [&](const std::string& p) { return std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : dir / p; };
  // Scenario references resolve against "data_dir", or the nearest enclosing
  // folder holding a CHECKSUMS file.
  auto data_dir = [&]() -> std::filesystem::path {
    if (doc.contains("data_dir")) return resolve(doc.at("data_dir").get<std::string>());
    for (auto d = std::filesystem::absolute(dir); !d.empty(); d = d.parent_path()) {
      if (std::filesystem::exists(d / "CHECKSUMS")) return d;
      if (d == d.parent_path()) break;
    }
    return data::default_dir();
  };
  CoordinationConfig c;
  try {
    c.transmission = tso::load_case(resolve(doc.at("transmission").get<std::string>()));
    if (doc.contains("outage")) {
      const auto o = doc.at("outage").get<std::vector<int>>();
      if (o.size() != 2) throw Error(ErrorKind::ValidationError, "outage must list two bus ids");
      c.transmission = tso::remove_branch(c.transmission, o[0], o[1]);
    } else if (c.transmission.outage) {
      c.transmission = tso::remove_branch(c.transmission, c.transmission.outage->first, c.transmission.outage->second);
    }
    for (const auto& f : doc.at("feeders")) {
      FeederAttachment a;
      double irradiance = 1.0;
      if (f.contains("scenario")) {
        auto s = data::load_scenario(f.at("scenario").get<std::string>(), data_dir());
        a.feeder = std::make_shared<const feeder::FeederModel>(std::move(s.feeder));
        a.specs = s.fleet.specs;
        a.profile = s.fleet.profile;
        irradiance = s.irradiance;
      } else {
        a.feeder = std::make_shared<const feeder::FeederModel>(io::load_feeder(resolve(f.at("feeder").get<std::string>())));
        const auto fleet = io::load_fleet(resolve(f.at("inverters").get<std::string>()), a.feeder->base);
        a.specs = fleet.specs;
        a.profile = fleet.profile;
      }
      a.interface_bus = f.at("interface_bus").get<int>();
      const auto it = std::find_if(c.transmission.interfaces.begin(), c.transmission.interfaces.end(),
                                   [&](const tso::Interface& i) { return i.bus == a.interface_bus; });
      a.multiplicity = f.value("multiplicity", it == c.transmission.interfaces.end() ? 1 : it->multiplicity);
      a.irradiance = f.value("irradiance", irradiance);
      c.feeders.push_back(std::move(a));
    }
    c.eps_kvar = doc.value("eps_kvar", c.eps_kvar);
    c.eps_rel = doc.value("eps_rel", c.eps_rel);
    c.max_iters = doc.value("max_iters", c.max_iters);
    if (doc.contains("encoding")) {
      const auto e = doc.at("encoding").get<std::string>();
      if (e != "bigm" && e != "sos1") throw Error(ErrorKind::ValidationError, "encoding must be bigm or sos1");
      c.encoding = e == "bigm" ? inverter::Encoding::BigM : inverter::Encoding::Sos1;
    }
    if (doc.contains("rls")) {
      c.rls.lambda = doc.at("rls").value("lambda", c.rls.lambda);
      c.rls.p0_scale = doc.at("rls").value("p0_scale", c.rls.p0_scale);
    }
    if (doc.contains("tso")) {
      c.tso_weights.c_v = doc.at("tso").value("c_v", c.tso_weights.c_v);
      c.tso_weights.c_q = doc.at("tso").value("c_q", c.tso_weights.c_q);
      c.tso_weights.v_setpoint = doc.at("tso").value("v_setpoint", c.tso_weights.v_setpoint);
    }
    if (doc.value("plant", std::string("nonlinear")) == "linear") c.plant = Plant::Linear;
    c.freeze_exact_params = doc.value("freeze_exact_params", false);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ValidationError, path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

const char* to_string(Decision d) {
  switch (d) {
    case Decision::Converged: return "converged";
    case Decision::Resend: return "resend";
    case Decision::Redisaggregate: return "redisaggregate";
  }
  return "?";
}

Decision check_convergence(double q_req, double q_meas, double q_lo, double q_hi, double eps) {
  if (q_req < q_lo || q_req > q_hi) return Decision::Resend;
  if (std::abs(q_req - q_meas) >= eps) return Decision::Redisaggregate;
  return Decision::Converged;
}

namespace {

struct Network {
  std::vector<double> vmag;
  double p_export = 0.0;
  double q_export = 0.0;
  std::vector<double> y;
};

Network solve_network(const DispatchContext& ctx, const std::vector<double>& pg, const std::vector<double>& qg,
                      Plant plant) {
  Network n;
  if (plant == Plant::Nonlinear) {
    const auto r = feeder::bfm_oracle(*ctx.feeder, pg, qg);
    n.vmag = r.vmag;
    n.p_export = r.p_export();
    n.q_export = r.q_export();
    n.y.resize(n.vmag.size());
    for (std::size_t i = 0; i < n.y.size(); ++i) n.y[i] = n.vmag[i] * n.vmag[i];
  } else {
    n.y = feeder::lindist_voltages(ctx.blocks, pg, qg);
    const auto f = feeder::line_flows(ctx.blocks, n.y, pg, qg);
    n.p_export = f.p_export;
    n.q_export = f.q_export;
    n.vmag.resize(n.y.size());
    for (std::size_t i = 0; i < n.y.size(); ++i) n.vmag[i] = feeder::voltage_from_y(n.y[i], ctx.blocks.y0[i]);
  }
  return n;
}

FieldResult make_sample(const DispatchContext& ctx, const std::vector<double>& pg, const std::vector<double>& qg,
                        const Network& net) {
  FieldResult f;
  const auto& obs = ctx.part.partition.observable;
  f.sample.p_o.resize(obs.size());
  f.sample.q_o.resize(obs.size());
  f.sample.y_o.resize(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    f.sample.p_o[i] = pg[obs[i]] - ctx.blocks.loads.p0[obs[i]];
    f.sample.q_o[i] = qg[obs[i]] - ctx.blocks.loads.q0[obs[i]];
    f.sample.y_o[i] = net.y[obs[i]];
  }
  f.q_meas = net.q_export;
  f.p_meas = net.p_export;
  return f;
}

// Q range the capability rows leave open at real power p.
std::pair<double, double> q_range(const inverter::InverterSpec& spec, double p) {
  double lo = spec.q_min, hi = spec.q_max;
  for (const auto& row : inverter::capability_constraints(spec)) {
    if (row.cq == 0.0) continue;
    double a = (row.lo - row.cp * p) / row.cq, b = (row.hi - row.cp * p) / row.cq;
    if (row.cq < 0.0) std::swap(a, b);
    lo = std::max(lo, a);
    hi = std::min(hi, b);
  }
  if (lo > hi) lo = hi = 0.5 * (lo + hi);
  return {lo, hi};
}

}  // namespace

FieldResult sample_fixed(const DispatchContext& ctx, std::span<const double> p_der, std::span<const double> q_der,
                         Plant plant) {
  const std::size_t n = ctx.blocks.y0.size();
  std::vector<double> pg(n, 0.0), qg(n, 0.0);
  for (std::size_t i = 0; i < ctx.ders.size(); ++i) {
    pg[ctx.ders[i].node] += p_der[i];
    qg[ctx.ders[i].node] += q_der[i];
  }
  const Network net = solve_network(ctx, pg, qg, plant);
  FieldResult f = make_sample(ctx, pg, qg, net);
  f.p_der.assign(p_der.begin(), p_der.end());
  f.q_der.assign(q_der.begin(), q_der.end());
  for (const auto& d : ctx.ders) f.v_der.push_back(net.vmag[d.node]);
  f.rounds = 1;
  return f;
}

FieldResult simulate_field(const DispatchContext& ctx, const DispatchResult& d, Plant plant) {
  constexpr int kMaxRounds = 50;
  constexpr double kTol = 1e-6;
  const std::size_t n = ctx.blocks.y0.size(), m = ctx.ders.size();
  if (d.ders.size() != m) throw Error(ErrorKind::DimensionMismatch, "dispatch does not match the DER list");
  std::vector<double> p(m), q(m);
  for (std::size_t i = 0; i < m; ++i) {
    p[i] = d.ders[i].p;
    q[i] = d.ders[i].q;
  }
  // Anderson mixing over the last few rounds; the history restarts and the
  // step is damped whenever the residual grows.
  constexpr std::size_t kDepth = 5;
  double relax = 1.0;
  std::vector<std::vector<double>> d_res, d_out;
  std::vector<double> prev_res, prev_out;
  double prev_gap = std::numeric_limits<double>::infinity();
  std::vector<double> pg(n), qg(n);
  Network net;
  for (int round = 1; round <= kMaxRounds; ++round) {
    std::fill(pg.begin(), pg.end(), 0.0);
    std::fill(qg.begin(), qg.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      pg[ctx.ders[i].node] += p[i];
      qg[ctx.ders[i].node] += q[i];
    }
    net = solve_network(ctx, pg, qg, plant);

    double gap = 0.0;
    std::vector<double> tp = p, tq = q;
    for (std::size_t i = 0; i < m; ++i) {
      const auto& sp = d.ders[i];
      if (!sp.curve || !sp.mode) continue;
      const double v = net.vmag[ctx.ders[i].node];
      const auto& spec = ctx.ders[i].spec;
      switch (*sp.mode) {
        case Mode::VoltVar: tq[i] = inverter::evaluate_droop(*sp.curve, v); break;
        case Mode::VoltWatt:
          tp[i] = std::clamp(inverter::evaluate_droop(*sp.curve, v), spec.p_min, ctx.ders[i].p_available);
          break;
        case Mode::WattVar: tq[i] = inverter::evaluate_droop(*sp.curve, tp[i]); break;
      }
      const auto [lo, hi] = q_range(spec, tp[i]);
      tq[i] = std::clamp(tq[i], lo, hi);
      gap = std::max({gap, std::abs(tp[i] - p[i]), std::abs(tq[i] - q[i])});
    }
    if (gap < kTol) {
      FieldResult f = make_sample(ctx, pg, qg, net);
      f.p_der = p;
      f.q_der = q;
      for (const auto& der : ctx.ders) f.v_der.push_back(net.vmag[der.node]);
      f.rounds = round;
      return f;
    }

    std::vector<double> out(2 * m), res(2 * m);
    for (std::size_t i = 0; i < m; ++i) {
      out[i] = tp[i];
      out[m + i] = tq[i];
      res[i] = tp[i] - p[i];
      res[m + i] = tq[i] - q[i];
    }
    if (gap >= prev_gap) {
      d_res.clear();
      d_out.clear();
      relax = std::max(0.05, 0.5 * relax);
    } else if (!prev_res.empty()) {
      std::vector<double> dr(2 * m), dg(2 * m);
      for (std::size_t j = 0; j < 2 * m; ++j) dr[j] = res[j] - prev_res[j], dg[j] = out[j] - prev_out[j];
      d_res.push_back(std::move(dr));
      d_out.push_back(std::move(dg));
      if (d_res.size() > kDepth) {
        d_res.erase(d_res.begin());
        d_out.erase(d_out.begin());
      }
    }
    prev_gap = gap;
    prev_res = res;
    prev_out = out;

    std::vector<double> next = out;
    if (!d_res.empty()) {
      const std::size_t h = d_res.size();
      numkit::Matrix gram(h, h), rhs(h, 1);
      for (std::size_t a = 0; a < h; ++a) {
        for (std::size_t b = 0; b < h; ++b)
          for (std::size_t j = 0; j < 2 * m; ++j) gram(a, b) += d_res[a][j] * d_res[b][j];
        for (std::size_t j = 0; j < 2 * m; ++j) rhs(a, 0) += d_res[a][j] * res[j];
      }
      double scale = 0.0;
      for (std::size_t a = 0; a < h; ++a) scale = std::max(scale, gram(a, a));
      for (std::size_t a = 0; a < h; ++a) gram(a, a) += 1e-10 * scale;
      try {
        const auto gamma = numkit::solve_linear(gram, rhs);
        for (std::size_t a = 0; a < h; ++a)
          for (std::size_t j = 0; j < 2 * m; ++j) next[j] -= gamma(a, 0) * d_out[a][j];
      } catch (const Error&) {
        d_res.clear();
        d_out.clear();
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      p[i] += relax * (next[i] - p[i]);
      q[i] += relax * (next[m + i] - q[i]);
    }
  }
  throw Error(ErrorKind::NoConvergence,
              "droop responses did not settle within 50 rounds (gap " + std::to_string(prev_gap) + " pu)");
}

namespace {

struct FeederState {
  DispatchContext ctx;
  estimator::RlsState rls;
  DispatchResult agg;
  DispatchResult last;
  double q_req = 0.0;
  double q_base = 0.0;      // export at start-up, already part of the transmission bus load
  double scale_kvar = 1.0;  // kvar per pu
};

double model_export_q(const DispatchContext& ctx, std::span<const double> p, std::span<const double> q) {
  const auto es = dispatch::export_sensitivity(ctx);
  double v = es.q0 + ctx.q_export_bias;
  for (std::size_t i = 0; i < p.size(); ++i) v += es.dq_dp[i] * p[i] + es.dq_dq[i] * q[i];
  return v;
}

double stage_ms(const DispatchResult& r) {
  double t = 0.0;
  for (const auto& s : r.stats) t += s.wall_ms;
  return t;
}

}  // namespace

CoordinationResult run_coordination(const CoordinationConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const std::size_t nf = cfg.feeders.size();
  std::vector<FeederState> st(nf);

  auto init_one = [&](std::size_t k) {
    const auto& a = cfg.feeders[k];
    FeederState& s = st[k];
    s.ctx = dispatch::make_context(*a.feeder, a.specs, a.profile, a.irradiance);
    s.ctx.encoding = cfg.encoding;
    s.scale_kvar = a.feeder->base.s_kva;
    std::vector<double> p0, q0(s.ctx.ders.size(), 0.0);
    for (const auto& d : s.ctx.ders) p0.push_back(d.p_available);
    const FieldResult first = sample_fixed(s.ctx, p0, q0, cfg.plant);
    if (!cfg.freeze_exact_params) {
      s.rls = estimator::init_state(s.ctx.part, first.sample, cfg.rls);
      s.ctx.coupling = estimator::extract_params(s.rls);
    }
    s.q_base = first.q_meas;
    s.ctx.q_export_bias = first.q_meas - model_export_q(s.ctx, p0, q0);
    s.agg = dispatch::aggregate(s.ctx);
  };

  auto for_each_feeder = [&](auto&& fn) {
    if (cfg.parallel && nf > 1) {
      std::vector<std::future<void>> jobs;
      for (std::size_t k = 0; k < nf; ++k) jobs.push_back(std::async(std::launch::async, fn, k));
      for (auto& j : jobs) j.get();
    } else {
      for (std::size_t k = 0; k < nf; ++k) fn(k);
    }
  };

  for_each_feeder(init_one);

  CoordinationResult res;
  bool need_tso = true;
  std::vector<double> tso_q;
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    const auto t_iter = std::chrono::steady_clock::now();
    IterationTrace tr;
    tr.iter = iter;
    std::vector<FeederStep> steps(nf);

    if (need_tso) {
      const auto& ifaces = cfg.transmission.interfaces;
      std::vector<double> lo(ifaces.size()), hi(ifaces.size());
      for (std::size_t i = 0; i < ifaces.size(); ++i) {
        lo[i] = ifaces[i].q_lo_mvar;
        hi[i] = ifaces[i].q_hi_mvar;
      }
      for (std::size_t k = 0; k < nf; ++k) {
        const auto& a = cfg.feeders[k];
        for (std::size_t i = 0; i < ifaces.size(); ++i)
          if (ifaces[i].bus == a.interface_bus) {
            lo[i] = (st[k].agg.q_lo - st[k].q_base) * st[k].scale_kvar * a.multiplicity / 1000.0;
            hi[i] = (st[k].agg.q_hi - st[k].q_base) * st[k].scale_kvar * a.multiplicity / 1000.0;
          }
      }
      const auto td = tso::tso_dispatch(cfg.transmission, lo, hi, cfg.tso_weights);
      tso_q = td.q_req_mvar;
      for (std::size_t k = 0; k < nf; ++k) {
        const auto& a = cfg.feeders[k];
        for (std::size_t i = 0; i < ifaces.size(); ++i)
          if (ifaces[i].bus == a.interface_bus)
            st[k].q_req = std::clamp(st[k].q_base + tso_q[i] * 1000.0 / (a.multiplicity * st[k].scale_kvar),
                                     st[k].agg.q_lo, st[k].agg.q_hi);
      }
      tr.tso_run = true;
    }
    tr.tso_q_req_mvar = tso_q;

    auto step_one = [&](std::size_t k) {
      FeederState& s = st[k];
      FeederStep& fs = steps[k];
      fs.interface_bus = cfg.feeders[k].interface_bus;
      fs.q_lo_kvar = s.agg.q_lo * s.scale_kvar;
      fs.q_hi_kvar = s.agg.q_hi * s.scale_kvar;
      fs.q_req_kvar = s.q_req * s.scale_kvar;
      s.last = dispatch::stage2b_disaggregate(s.ctx, s.agg.p_star, s.q_req);
      double ms = stage_ms(s.last);
      const FieldResult field = simulate_field(s.ctx, s.last, cfg.plant);
      fs.q_meas_kvar = field.q_meas * s.scale_kvar;
      if (!cfg.freeze_exact_params) {
        estimator::rls_update(s.rls, estimator::build_regressor(field.sample, s.ctx.part));
        s.ctx.coupling = estimator::extract_params(s.rls);
      }
      s.ctx.q_export_bias += field.q_meas - s.last.q_sub;
      s.agg = dispatch::aggregate(s.ctx);
      ms += stage_ms(s.agg);
      fs.q_lo_new_kvar = s.agg.q_lo * s.scale_kvar;
      fs.q_hi_new_kvar = s.agg.q_hi * s.scale_kvar;
      fs.p_star_kw = s.agg.p_star * s.scale_kvar;
      fs.k1_norm = numkit::norm_fro(s.ctx.coupling.k1);
      fs.c2_norm = numkit::norm2(s.ctx.coupling.c2);
      fs.stage_ms = ms;
      const double eps = std::max(cfg.eps_kvar, cfg.eps_rel * std::abs(fs.q_req_kvar));
      fs.decision = check_convergence(fs.q_req_kvar, fs.q_meas_kvar, fs.q_lo_new_kvar, fs.q_hi_new_kvar, eps);
    };
    for_each_feeder(step_one);

    bool all_done = true;
    need_tso = false;
    for (const auto& fs : steps) {
      all_done = all_done && fs.decision == Decision::Converged;
      need_tso = need_tso || fs.decision == Decision::Resend;
    }
    tr.feeders = std::move(steps);
    tr.wall_ms = ms_since(t_iter);
    res.trace.push_back(std::move(tr));
    if (all_done) {
      res.converged = true;
      res.status = "Converged";
      break;
    }
    for (std::size_t k = 0; k < nf; ++k) st[k].q_req = std::clamp(st[k].q_req, st[k].agg.q_lo, st[k].agg.q_hi);
  }
  if (!res.converged) res.status = "MaxItersExceeded";
  for (auto& s : st) {
    res.final_dispatch.push_back(s.last);
    res.final_context.push_back(std::move(s.ctx));
  }
  res.wall_ms = ms_since(t_start);
  return res;
}

}  // namespace gridcoord::coordinate
