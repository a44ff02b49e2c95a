#include <doctest.h>

#include <cmath>
#include <memory>

#include "gridcoord/coordinate.hpp"
#include "gridcoord/data.hpp"
#include "gridcoord/error.hpp"
#include "gridcoord/io.hpp"
#include "small_feeders.hpp"

using namespace gridcoord;
using namespace gridcoord::coordinate;

namespace {

const std::filesystem::path kData = GRIDCOORD_TEST_DATA_DIR;

struct ChainCase {
  std::shared_ptr<const feeder::FeederModel> feeder;
  io::InverterFleet fleet;
};

ChainCase chain_case() {
  ChainCase c;
  c.feeder = std::make_shared<const feeder::FeederModel>(
      testutil::chain({{0.02, 0.04}, {0.03, 0.05}}, {{200.0, 80.0, 0.6, 0.2, 0.2}, {150.0, 60.0}}, {1, 2}));
  c.fleet = io::fleet_from_json(testutil::fleet_doc(350.0, 300.0, 154.0), c.feeder->base);
  return c;
}

CoordinationConfig chain_config(Plant plant, bool frozen) {
  const auto c = chain_case();
  CoordinationConfig cfg;
  cfg.transmission = tso::load_case(kData / "transmission" / "case9.json");
  FeederAttachment a;
  a.feeder = c.feeder;
  a.specs = c.fleet.specs;
  a.profile = c.fleet.profile;
  a.interface_bus = 5;
  a.multiplicity = 1;
  cfg.feeders.push_back(a);
  cfg.plant = plant;
  cfg.freeze_exact_params = frozen;
  return cfg;
}

// |V|^2 at the far end of one line feeding an injection (p, q) into bus 1
double two_bus_v(double r, double x, double p, double q) {
  const double b = -2 * (r * p + x * q) - 1.0, c = (r * r + x * x) * (p * p + q * q);
  return std::sqrt((-b + std::sqrt(b * b - 4 * c)) / 2);
}

}  // namespace

TEST_SUITE("coordinate") {
  TEST_CASE("convergence decision") {
    CHECK(check_convergence(0.5, 0.5, 0.0, 1.0, 0.01) == Decision::Converged);
    CHECK(check_convergence(1.5, 1.5, 0.0, 1.0, 0.01) == Decision::Resend);
    CHECK(check_convergence(-0.1, -0.1, 0.0, 1.0, 0.01) == Decision::Resend);
    CHECK(check_convergence(0.5, 0.52, 0.0, 1.0, 0.01) == Decision::Redisaggregate);
    CHECK(check_convergence(0.5, 0.5 + 0.0099, 0.0, 1.0, 0.01) == Decision::Converged);
    CHECK(std::string(to_string(Decision::Resend)) == "resend");
  }

  TEST_CASE("field simulation") {
    const auto c = chain_case();
    const auto ctx = dispatch::make_context(*c.feeder, c.fleet.specs, c.fleet.profile);
    const std::vector<double> p{0.25, 0.2}, q{0.0, 0.0};

    // fixed injections reduce to one oracle solve
    const auto f = sample_fixed(ctx, p, q);
    std::vector<double> pg(c.feeder->node_count(), 0.0), qg(c.feeder->node_count(), 0.0);
    pg[ctx.ders[0].node] = p[0];
    pg[ctx.ders[1].node] = p[1];
    const auto o = feeder::bfm_oracle(*c.feeder, pg, qg);
    CHECK(f.q_meas == doctest::Approx(o.q_export()).epsilon(1e-12));
    CHECK(f.v_der[1] == doctest::Approx(o.vmag[ctx.ders[1].node]).epsilon(1e-12));

    dispatch::DispatchResult pq;
    for (std::size_t i = 0; i < 2; ++i) {
      dispatch::DerSetpoint sp;
      sp.p = p[i];
      pq.ders.push_back(sp);
    }
    const auto g = simulate_field(ctx, pq);
    CHECK(g.rounds == 1);
    CHECK(g.q_meas == doctest::Approx(o.q_export()).epsilon(1e-12));

    // losses and linearization separate the two plants
    const auto lin = sample_fixed(ctx, p, q, Plant::Linear);
    CHECK(std::abs(lin.q_meas - f.q_meas) > 1e-5);

    dispatch::DispatchResult short_d;
    CHECK_THROWS_AS(simulate_field(ctx, short_d), Error);
  }

  TEST_CASE("volt-var fixed point on one line") {
    const double r = 0.2, x = 0.2, p = 0.3;
    const auto model = testutil::chain({{r, x}}, {}, {1});
    const auto fleet = io::fleet_from_json(testutil::fleet_doc(350.0, 300.0, 154.0), model.base);
    const auto ctx = dispatch::make_context(model, fleet.specs, fleet.profile);
    const auto curve = inverter::make_default_curve(inverter::Mode::VoltVar, fleet.specs[0], fleet.profile);
    REQUIRE(two_bus_v(r, x, p, 0.0) > 1.02);

    dispatch::DispatchResult d;
    dispatch::DerSetpoint sp;
    sp.mode = inverter::Mode::VoltVar;
    sp.curve = curve;
    sp.p = p;
    d.ders.push_back(sp);
    const auto f = simulate_field(ctx, d);

    // scalar hand solve: q = curve(V(q)) by bisection on the decreasing gap
    auto gap = [&](double q) { return inverter::evaluate_droop(curve, two_bus_v(r, x, p, q)) - q; };
    double lo = -0.154, hi = 0.154;
    REQUIRE(gap(lo) > 0.0);
    REQUIRE(gap(hi) < 0.0);
    for (int k = 0; k < 200; ++k) (gap(0.5 * (lo + hi)) > 0.0 ? lo : hi) = 0.5 * (lo + hi);
    CHECK(f.q_der[0] < 0.0);
    CHECK(f.q_der[0] == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-5));
    CHECK(f.p_der[0] == p);
  }

  TEST_CASE("configuration") {
    auto cfg = chain_config(Plant::Nonlinear, false);
    CHECK_NOTHROW(cfg.validate());
    auto bad = cfg;
    bad.eps_kvar = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.feeders[0].interface_bus = 1;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.max_iters = 0;
    CHECK_THROWS_AS(bad.validate(), Error);

    const auto loaded = load_config(kData / "scenarios" / "coordination" / "feeder13.json");
    REQUIRE(loaded.feeders.size() == 3);
    CHECK(loaded.feeders[2].interface_bus == 9);
    CHECK(loaded.feeders[2].multiplicity == 40);
    CHECK(loaded.transmission.branches.size() == 8);
    CHECK(loaded.max_iters == 10);
  }

  TEST_CASE("model equals plant") {
    const auto res = run_coordination(chain_config(Plant::Linear, true));
    CHECK(res.converged);
    REQUIRE(res.trace.size() == 1);
    const auto& fs = res.trace[0].feeders[0];
    CHECK(std::abs(fs.q_req_kvar - fs.q_meas_kvar) < 1e-6);
    CHECK(res.trace[0].tso_run);
  }

  TEST_CASE("loop is deterministic") {
    auto cfg = chain_config(Plant::Nonlinear, false);
    const auto a = run_coordination(cfg);
    cfg.parallel = false;
    const auto b = run_coordination(cfg);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
      CHECK(a.trace[i].feeders[0].q_meas_kvar == b.trace[i].feeders[0].q_meas_kvar);
      CHECK(a.trace[i].feeders[0].q_req_kvar == b.trace[i].feeders[0].q_req_kvar);
    }
    CHECK(a.trace.size() <= static_cast<std::size_t>(cfg.max_iters));
  }

  TEST_CASE("bundled feeders converge") {
    for (const char* name : {"feeder13.json", "feeder40.json"}) {
      const auto cfg = load_config(kData / "scenarios" / "coordination" / name);
      const auto res = run_coordination(cfg);
      CHECK(res.converged);
      CHECK(res.status == "Converged");
      for (const auto& fs : res.trace.back().feeders) {
        const double eps = std::max(cfg.eps_kvar, cfg.eps_rel * std::abs(fs.q_req_kvar));
        CHECK(std::abs(fs.q_req_kvar - fs.q_meas_kvar) < eps);
      }
      REQUIRE(res.final_dispatch.size() == 3);
      for (std::size_t k = 0; k < 3; ++k)
        for (const auto& sp : res.final_dispatch[k].ders) {
          if (!sp.curve) continue;
          const double in = sp.mode == inverter::Mode::WattVar ? sp.p : sp.v;
          const double out = sp.mode == inverter::Mode::VoltWatt ? sp.p : sp.q;
          CHECK(std::abs(inverter::evaluate_droop(*sp.curve, in) - out) <= 1e-6);
        }
    }
  }
}
