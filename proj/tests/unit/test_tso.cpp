#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gridcoord/error.hpp"
#include "gridcoord/tso.hpp"

using namespace gridcoord;
using namespace gridcoord::tso;
using nlohmann::json;

namespace {

const std::filesystem::path kData = GRIDCOORD_TEST_DATA_DIR;

TransmissionCase two_bus(double r, double x, double pd_mw, double qd_mvar, bool interface = false) {
  json doc;
  doc["base_mva"] = 100.0;
  doc["buses"] = json::array({{{"id", 1}, {"type", "slack"}, {"vm", 1.0}},
                              {{"id", 2}, {"type", "pq"}, {"pd_mw", pd_mw}, {"qd_mvar", qd_mvar}}});
  doc["branches"] = json::array({{{"from", 1}, {"to", 2}, {"r", r}, {"x", x}, {"b", 0.0}}});
  doc["gens"] = json::array({{{"bus", 1}, {"p_mw", 0.0}, {"vm", 1.0}}});
  doc["interfaces"] = json::array();
  if (interface)
    doc["interfaces"].push_back(
        {{"bus", 2}, {"feeder_ref", "f"}, {"multiplicity", 1}, {"q_lo_mvar", -50.0}, {"q_hi_mvar", 50.0}});
  return case_from_json(doc);
}

TransmissionCase case9() { return load_case(kData / "transmission" / "case9.json"); }

// |V2|^2 root of y^2 + (2(rP + xQ) - 1) y + (r^2 + x^2)(P^2 + Q^2) = 0
double two_bus_v(double r, double x, double p, double q) {
  const double b = 2 * (r * p + x * q) - 1.0, c = (r * r + x * x) * (p * p + q * q);
  return std::sqrt((-b + std::sqrt(b * b - 4 * c)) / 2);
}

}  // namespace

TEST_SUITE("tso") {
  TEST_CASE("newton power flow") {
    const auto flat = newton_powerflow(two_bus(0.01, 0.1, 0.0, 0.0));
    CHECK(flat.vm[1] == doctest::Approx(1.0));
    CHECK(flat.va[1] == doctest::Approx(0.0));
    CHECK(std::abs(flat.flows.front().s_from) == doctest::Approx(0.0));

    const auto loaded = newton_powerflow(two_bus(0.0, 0.1, 100.0, 0.0));
    CHECK(loaded.vm[1] == doctest::Approx(two_bus_v(0.0, 0.1, 1.0, 0.0)).epsilon(1e-9));
    const auto lossy = newton_powerflow(two_bus(0.02, 0.08, 60.0, 30.0));
    CHECK(lossy.vm[1] == doctest::Approx(two_bus_v(0.02, 0.08, 0.6, 0.3)).epsilon(1e-9));
    CHECK(lossy.s_slack.real() > 0.6);

    const auto c = case9();
    const auto pf = newton_powerflow(c);
    CHECK(pf.iterations <= 6);
    CHECK(pf.mismatch < 1e-8);
    CHECK(c.buses.size() == 9);
    double load = 0.0;
    for (const auto& b : c.buses) load += b.pd_mw;
    CHECK(load == doctest::Approx(315.0));

    try {
      newton_powerflow(two_bus(0.0, 0.5, 400.0, 200.0));
      FAIL("expected NoConvergence");
    } catch (const Error& e) {
      CHECK((e.kind() == ErrorKind::NoConvergence || e.kind() == ErrorKind::SingularJacobian));
    }
  }

  TEST_CASE("case validation") {
    auto doc = json::parse(R"({"base_mva":100,"buses":[{"id":1,"type":"slack"},{"id":2,"type":"slack"}],
      "branches":[{"from":1,"to":2,"r":0,"x":0.1,"b":0}],"gens":[],"interfaces":[]})");
    CHECK_THROWS_AS(case_from_json(doc), Error);
    doc["buses"][1]["type"] = "pq";
    doc["branches"] = json::array();
    CHECK_THROWS_AS(case_from_json(doc), Error);

    const auto c = case9();
    const auto cut = remove_branch(c, 9, 4);
    CHECK(cut.branches.size() == c.branches.size() - 1);
    CHECK_THROWS_AS(remove_branch(c, 1, 9), Error);
    CHECK_THROWS_AS(remove_branch(c, 1, 4), Error);
  }

  TEST_CASE("voltage sensitivities") {
    const auto c2 = two_bus(0.0, 0.1, 50.0, 0.0, true);
    const auto s2 = newton_powerflow(c2);
    const std::vector<std::size_t> idx{1};
    const auto m = vq_sensitivity(c2, s2, idx, idx);
    CHECK(m(0, 0) > 0.0);
    CHECK(std::abs(m(0, 0) - 0.1 / s2.vm[1]) <= 0.1 * 0.1 / s2.vm[1]);

    const auto c = case9();
    const auto base = newton_powerflow(c);
    const auto mon = c.monitored();
    std::vector<std::size_t> ifs;
    for (const auto& i : c.interfaces) ifs.push_back(c.bus_position(i.bus));
    const auto sens = vq_sensitivity(c, base, mon, ifs);
    REQUIRE(sens.rows() == mon.size());
    REQUIRE(sens.cols() == ifs.size());
    const double h = 1e-4;
    for (std::size_t j = 0; j < ifs.size(); ++j) {
      std::vector<double> q(c.buses.size(), 0.0);
      q[ifs[j]] = h;
      const auto up = newton_powerflow(c, q);
      CHECK(sens(std::find(mon.begin(), mon.end(), ifs[j]) - mon.begin(), j) > 0.0);
      for (std::size_t i = 0; i < mon.size(); ++i)
        CHECK(std::abs(sens(i, j) - (up.vm[mon[i]] - base.vm[mon[i]]) / h) <= 1e-3);
    }
  }

  TEST_CASE("reactive dispatch") {
    const auto c = case9();
    const std::vector<double> zero(c.interfaces.size(), 0.0);
    const auto d0 = tso_dispatch(c, zero, zero);
    for (double q : d0.q_req_mvar) CHECK(q == 0.0);
    const auto pf = newton_powerflow(c);
    CHECK(d0.objective == doctest::Approx(dispatch_objective(c, pf, zero, {})).epsilon(1e-10));

    const auto weak = two_bus(0.02, 0.2, 40.0, 20.0, true);
    const auto dw = tso_dispatch(weak);
    REQUIRE(dw.q_req_mvar.size() == 1);
    CHECK(dw.q_req_mvar[0] > 0.0);
    CHECK(dw.q_req_mvar[0] <= 50.0 + 1e-9);
    std::vector<double> inj{0.0, dw.q_req_mvar[0] / 100.0};
    const auto after = newton_powerflow(weak, inj);
    CHECK(after.vm[1] > newton_powerflow(weak).vm[1]);
    CHECK(after.vm[1] == doctest::Approx(dw.vm[1]).epsilon(1e-9));

    const auto d = tso_dispatch(c);
    for (std::size_t i = 0; i < d.q_req_mvar.size(); ++i) {
      CHECK(d.q_req_mvar[i] >= c.interfaces[i].q_lo_mvar - 1e-9);
      CHECK(d.q_req_mvar[i] <= c.interfaces[i].q_hi_mvar + 1e-9);
    }
    for (std::size_t k = 1; k < d.objective_history.size(); ++k)
      CHECK(d.objective_history[k] <= d.objective_history[k - 1] + 1e-10);
  }

  TEST_CASE("branch outage") {
    const auto cut = remove_branch(case9(), 4, 9);
    const auto monitored = cut.monitored();
    const auto bare = newton_powerflow(cut);
    double worst_bare = 0.0;
    for (std::size_t k : monitored) worst_bare = std::max(worst_bare, std::abs(bare.vm[k] - 1.0));
    CHECK(worst_bare > 0.05);

    const auto d = tso_dispatch(cut);
    for (std::size_t k = 0; k < d.vm.size(); ++k) {
      CHECK(d.vm[k] >= 0.95 - 1e-9);
      CHECK(d.vm[k] <= 1.05 + 1e-9);
    }
    CHECK(d.worst_deviation <= worst_bare);
  }
}
