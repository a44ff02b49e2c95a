#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "gridcoord/data.hpp"
#include "gridcoord/error.hpp"
#include "gridcoord/feeder.hpp"
#include "gridcoord/io.hpp"
#include "small_feeders.hpp"
#include "test_util.hpp"

using namespace gridcoord;
using namespace gridcoord::feeder;
using testutil::chain;
using testutil::ChainLoad;
using testutil::to_eigen;

namespace {

const std::filesystem::path kData = GRIDCOORD_TEST_DATA_DIR;

FeederModel bundled13() { return io::load_feeder(kData / "feeders" / "feeder13.json"); }

FeederModel constant_power(FeederModel m) {
  for (auto& l : m.loads) l.a0 = 1.0, l.a1 = 0.0, l.a2 = 0.0;
  return m;
}

// Half load with the low-irradiance fleet output keeps every node inside 0.95..1.05 pu.
struct NominalCase {
  data::Scenario s;
  std::vector<double> p, q;
};
NominalCase nominal() {
  NominalCase c{data::load_scenario("feeder13-lowpv", kData), {}, {}};
  c.p.assign(c.s.feeder.node_count(), 0.0);
  c.q.assign(c.s.feeder.node_count(), 0.0);
  for (const auto& d : c.s.feeder.ders)
    c.p[*c.s.feeder.node_index(d.bus + "." + phase_letter(d.phase))] += c.s.fleet.find(d.inverter_id).p_max * c.s.irradiance;
  return c;
}

double max_sqrt_gap(const std::vector<double>& y, const OracleResult& o) {
  double worst = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) worst = std::max(worst, std::abs(std::sqrt(y[k]) - o.vmag[k]));
  return worst;
}

}  // namespace

TEST_SUITE("feeder") {
  TEST_CASE("loading feeders") {
    const auto m = bundled13();
    REQUIRE(m.ders.size() == 9);
    std::set<std::string> buses;
    for (const auto& d : m.ders) buses.insert(d.bus);
    CHECK(buses == std::set<std::string>{"634", "675", "680"});
    const auto fleet = io::load_fleet(kData / "inverters" / "pv300.json", m.base);
    for (const auto& d : m.ders) CHECK(fleet.find(d.inverter_id).p_max * m.base.s_kva == doctest::Approx(300.0));

    const auto tiny = chain({{0.01, 0.02}}, {{100.0, 50.0}});
    CHECK(tiny.node_count() == 1);
    CHECK(tiny.loads.size() == 1);

    auto doc = testutil::chain_doc({{0.01, 0.02}, {0.01, 0.02}}, {});
    doc["lines"].push_back({{"from", "2"}, {"to", "0"}, {"z", testutil::z_single(0.01, 0.02)}});
    CHECK_THROWS_AS(io::feeder_from_json(doc), Error);
    try {
      io::feeder_from_json(doc);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ValidationError);
    }

    auto bad_zip = testutil::chain_doc({{0.01, 0.02}}, {{100.0, 50.0, 0.5, 0.2, 0.2}});
    CHECK_THROWS_AS(io::feeder_from_json(bad_zip), Error);
    auto dangling = testutil::chain_doc({{0.01, 0.02}}, {});
    dangling["ders"].push_back({{"bus", "7"}, {"phase", "a"}, {"inverter_id", "pv"}});
    CHECK_THROWS_AS(io::feeder_from_json(dangling), Error);

    try {
      io::parse_json("{\"buses\": [1, 2,]}", "broken.json");
      FAIL("expected ParseError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ParseError);
      CHECK(std::string(e.what()).find("broken.json:1:") != std::string::npos);
    }
  }

  TEST_CASE("connectivity") {
    const auto two = build_connectivity(chain({{0.01, 0.02}}, {}));
    REQUIRE(two.m.rows() == 1);
    CHECK(two.m(0, 0) == -1.0);
    REQUIRE(two.m0.cols() == 1);
    CHECK(two.m0(0, 0) == 1.0);

    const auto three = build_connectivity(chain({{0.01, 0.02}, {0.03, 0.01}}, {}));
    CHECK(std::abs(to_eigen(three.m).determinant()) > 0.5);

    const auto conn = build_connectivity(bundled13());
    const auto n = conn.m.rows();
    const auto prod = conn.m * (-1.0 * numkit::inverse(conn.m));
    CHECK(numkit::max_abs_diff(prod, -1.0 * numkit::Matrix::identity(n)) < 1e-12);

    // [M0 M^T][Y0; Y] is Y_parent - Y_child on each line-phase
    const auto m = bundled13();
    std::mt19937_64 rng(5);
    const auto y = testutil::random_vector(rng, n, 0.9, 1.1);
    const auto y0 = m.y0_per_node();
    const auto mt = conn.m.transposed();
    const auto diff = mt * std::span<const double>(y);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& node = m.nodes[k];
      const auto parent = *m.parent_bus[node.bus];
      const double y_parent = parent == m.substation_index ? y0[k] : y[*m.node_index(parent, node.phase)];
      double from_sub = 0.0;
      for (std::size_t s = 0; s < conn.m0.cols(); ++s) from_sub += conn.m0(k, s) * m.y0[m.substation_phases()[s]];
      CHECK(diff[k] + from_sub == doctest::Approx(y_parent - y[k]).epsilon(1e-12));
    }
  }

  TEST_CASE("equivalent impedances") {
    const double r = 0.013, x = 0.027;
    const auto single = chain({{r, x}}, {});
    const auto eq = build_equivalents(single, build_connectivity(single));
    CHECK(eq.req(0, 0) == doctest::Approx(2 * r));
    CHECK(eq.xeq(0, 0) == doctest::Approx(2 * x));

    const auto zero = chain({{0.0, 0.0}}, {});
    const auto eqz = build_equivalents(zero, build_connectivity(zero));
    CHECK(eqz.req(0, 0) == 0.0);
    CHECK(eqz.xeq(0, 0) == 0.0);

    // Req of a chain is the shared-path resistance
    const auto ch = chain({{0.01, 0.0}, {0.02, 0.0}, {0.04, 0.0}}, {});
    const auto eqc = build_equivalents(ch, build_connectivity(ch));
    const double path[3] = {0.01, 0.03, 0.07};
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(eqc.req(i, j) == doctest::Approx(2 * path[std::min(i, j)]));

    const auto eqct = to_eigen(eqc.req);
    CHECK((eqct - eqct.transpose()).cwiseAbs().maxCoeff() == 0.0);

    // phase coupling makes Req non-symmetric; its symmetric part stays PSD
    const auto m = constant_power(bundled13());
    const auto blocks = build_sensitivity(m);
    const auto req = to_eigen(blocks.req);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (req + req.transpose()));
    CHECK(es.eigenvalues().minCoeff() > -1e-12);
    for (std::size_t k = 0; k < blocks.req.rows(); ++k) CHECK(blocks.req(k, k) >= 0.0);

    const std::size_t leaf = *m.node_index("675.a");
    std::vector<double> p(m.node_count(), 0.0), q(m.node_count(), 0.0);
    const auto base = lindist_voltages(blocks, p, q);
    p[leaf] = 1.0;
    const auto bumped = lindist_voltages(blocks, p, q);
    CHECK(bumped[leaf] - base[leaf] == doctest::Approx(blocks.req(leaf, leaf)).epsilon(1e-10));
  }

  TEST_CASE("load coupling matrix") {
    const auto cp = constant_power(bundled13());
    const auto k_cp = build_sensitivity(cp).k;
    CHECK(numkit::max_abs_diff(k_cp, numkit::Matrix::identity(k_cp.rows())) == 0.0);

    const double r = 0.02, x = 0.04, p = 0.3, q = 0.1;
    const auto z = chain({{r, x}}, {{p * 1000, q * 1000, 0.0, 1.0, 0.0}});
    const auto kz = build_sensitivity(z).k;
    CHECK(kz(0, 0) == doctest::Approx(1.0 + 2 * r * p + 2 * x * q));

    const auto k = build_sensitivity(bundled13()).k;
    const double gap = numkit::norm_inf(k - numkit::Matrix::identity(k.rows()));
    CHECK(gap > 0.0);
    CHECK(gap < 0.2);
  }

  TEST_CASE("linearized voltages") {
    const auto empty = bundled13();
    auto noload = empty;
    noload.loads.clear();
    noload.finalize();
    const auto blocks0 = build_sensitivity(noload);
    std::vector<double> zero(noload.node_count(), 0.0);
    const auto y0 = lindist_voltages(blocks0, zero, zero);
    const auto y0n = noload.y0_per_node();
    for (std::size_t k = 0; k < y0.size(); ++k) CHECK(y0[k] == doctest::Approx(y0n[k]).epsilon(1e-12));

    const double r = 0.01, x = 0.02, p = 0.1, q = 0.05;
    const auto two = chain({{r, x}}, {{p * 1000, q * 1000}});
    const auto y = lindist_voltages(build_sensitivity(two), std::vector<double>{0.0}, std::vector<double>{0.0});
    CHECK(y[0] == doctest::Approx(1.0 - 2 * (r * p + x * q)).epsilon(1e-12));

    const auto nc = nominal();
    const auto yl = lindist_voltages(build_sensitivity(nc.s.feeder), nc.p, nc.q);
    const auto o = bfm_oracle(nc.s.feeder, nc.p, nc.q);
    CHECK(*std::min_element(o.vmag.begin(), o.vmag.end()) >= 0.95);
    CHECK(*std::max_element(o.vmag.begin(), o.vmag.end()) <= 1.05);
    CHECK(max_sqrt_gap(yl, o) <= 0.01);

    CHECK(voltage_from_y(1.0, 1.0) == doctest::Approx(1.0));
    CHECK(voltage_from_y(1.02, 1.0) == doctest::Approx(1.01));
    CHECK(voltage_from_y(0.98, 1.0) == doctest::Approx(0.99));
  }

  TEST_CASE("line flows") {
    auto noload = bundled13();
    noload.loads.clear();
    noload.finalize();
    const auto b0 = build_sensitivity(noload);
    std::vector<double> zero(noload.node_count(), 0.0);
    const auto f0 = line_flows(b0, lindist_voltages(b0, zero, zero), zero, zero);
    for (double v : f0.p) CHECK(v == 0.0);
    CHECK(f0.p_export == 0.0);
    CHECK(f0.q_export == 0.0);

    const auto one = chain({{0.01, 0.02}}, {{1000.0, 500.0}});
    const auto b1 = build_sensitivity(one);
    const std::vector<double> g{0.0};
    const auto f1 = line_flows(b1, lindist_voltages(b1, g, g), g, g);
    CHECK(f1.p_export == doctest::Approx(-1.0));
    CHECK(f1.q_export == doctest::Approx(-0.5));

    // three-node chain: line-phase flows are the downstream sums
    const auto ch = chain({{0.01, 0.01}, {0.01, 0.01}, {0.01, 0.01}}, {{100, 10}, {200, 20}, {300, 30}});
    const auto bc = build_sensitivity(ch);
    const std::vector<double> gc(3, 0.0);
    const auto fc = line_flows(bc, lindist_voltages(bc, gc, gc), gc, gc);
    CHECK(fc.p[0] == doctest::Approx(0.6));
    CHECK(fc.p[1] == doctest::Approx(0.5));
    CHECK(fc.p[2] == doctest::Approx(0.3));

    const auto nc = nominal();
    const auto b = build_sensitivity(nc.s.feeder);
    const auto f = line_flows(b, lindist_voltages(b, nc.p, nc.q), nc.p, nc.q);
    const auto o = bfm_oracle(nc.s.feeder, nc.p, nc.q);
    CHECK(std::abs(f.p_export - o.p_export()) <= 0.02 * std::abs(o.p_export()));
  }

  TEST_CASE("nonlinear oracle") {
    auto noload = bundled13();
    noload.loads.clear();
    noload.finalize();
    std::vector<double> zero(noload.node_count(), 0.0);
    const auto o0 = bfm_oracle(noload, zero, zero);
    for (std::size_t k = 0; k < noload.node_count(); ++k)
      CHECK(o0.vmag[k] == doctest::Approx(std::sqrt(noload.y0[noload.nodes[k].phase])).epsilon(1e-12));

    // |V2|^4 + (2(rp+xq) - |V0|^2)|V2|^2 + |z|^2|S|^2 = 0, larger root
    const double r = 0.01, x = 0.02, p = 0.1, q = 0.05;
    const auto two = chain({{r, x}}, {{p * 1000, q * 1000}});
    const std::vector<double> g{0.0};
    const auto o = bfm_oracle(two, g, g);
    const double b = 2 * (r * p + x * q) - 1.0, c = (r * r + x * x) * (p * p + q * q);
    const double v2sq = (-b + std::sqrt(b * b - 4 * c)) / 2;
    CHECK(o.vmag[0] == doctest::Approx(std::sqrt(v2sq)).epsilon(1e-9));
    CHECK(-o.p_export() == doctest::Approx(p + r * (p * p + q * q) / v2sq).epsilon(1e-9));

    const auto s = data::load_scenario("feeder13-highpv", kData);
    std::vector<double> pg(s.feeder.node_count(), 0.0), qg(s.feeder.node_count(), 0.0);
    for (const auto& d : s.feeder.ders)
      pg[*s.feeder.node_index(d.bus + "." + phase_letter(d.phase))] += s.fleet.find(d.inverter_id).p_max * s.irradiance;
    const auto hp = bfm_oracle(s.feeder, pg, qg);
    CHECK(*std::max_element(hp.vmag.begin(), hp.vmag.end()) > 1.05);

    try {
      const auto weak = chain({{0.5, 0.5}}, {{3000.0, 3000.0}});
      bfm_oracle(weak, g, g);
      FAIL("expected NoConvergence");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NoConvergence);
    }
  }

  TEST_CASE("partition blocks") {
    const auto m = bundled13();
    const auto blocks = build_sensitivity(m);
    const auto n = m.node_count();
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);

    const auto full = partition_blocks(blocks, make_partition(m, all));
    CHECK(full.n_u() == 0);
    CHECK(numkit::max_abs_diff(full.koo, blocks.k - numkit::Matrix::identity(n)) == 0.0);

    const auto ders = m.der_nodes();
    const auto dp = partition_blocks(blocks, make_partition(m, ders));
    std::set<std::size_t> uniq(ders.begin(), ders.end());
    CHECK(dp.n_o() == uniq.size());
    CHECK(dp.n_u() == n - uniq.size());
    CHECK(dp.kou.rows() == dp.n_o());
    CHECK(dp.kou.cols() == dp.n_u());
    CHECK(dp.ruo.rows() == dp.n_u());
    CHECK(dp.xuu.cols() == dp.n_u());

    std::vector<std::size_t> missing(ders.begin() + 1, ders.end());
    try {
      make_partition(m, missing);
      FAIL("expected InvalidPartition");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidPartition);
    }

    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<std::size_t> obs(ders.begin(), ders.end());
      for (std::size_t k = 0; k < n; ++k)
        if (rng() % 2 == 0) obs.push_back(k);
      const auto pb = partition_blocks(blocks, make_partition(m, obs));
      const auto& o = pb.partition.observable;
      const auto& u = pb.partition.unobservable;
      Eigen::MatrixXd k = Eigen::MatrixXd::Identity(n, n);
      for (std::size_t i = 0; i < o.size(); ++i) {
        for (std::size_t j = 0; j < o.size(); ++j) k(o[i], o[j]) += pb.koo(i, j);
        for (std::size_t j = 0; j < u.size(); ++j) k(o[i], u[j]) += pb.kou(i, j);
      }
      for (std::size_t i = 0; i < u.size(); ++i) {
        for (std::size_t j = 0; j < o.size(); ++j) k(u[i], o[j]) += pb.kuo(i, j);
        for (std::size_t j = 0; j < u.size(); ++j) k(u[i], u[j]) += pb.kuu(i, j);
      }
      CHECK((k - to_eigen(blocks.k)).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  TEST_CASE("observable voltages") {
    const auto m = bundled13();
    const auto blocks = build_sensitivity(m);
    const auto n = m.node_count();
    std::mt19937_64 rng(23);
    const auto p_gen = testutil::random_vector(rng, n, 0.0, 0.2);
    const auto q_gen = testutil::random_vector(rng, n, -0.05, 0.05);
    const auto y_full = lindist_voltages(blocks, p_gen, q_gen);
    const auto pn = constant_injection(p_gen, blocks.loads.p0);
    const auto qn = constant_injection(q_gen, blocks.loads.q0);

    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    const auto fb = partition_blocks(blocks, make_partition(m, all));
    const auto cf = exact_coupling(fb, {}, {});
    const auto yf = observable_voltages(fb, pn, qn, cf.k1, cf.c2);
    for (std::size_t k = 0; k < n; ++k) CHECK(yf[k] == doctest::Approx(y_full[k]).epsilon(1e-12));

    const auto pb = partition_blocks(blocks, make_partition(m));
    const auto& o = pb.partition.observable;
    const auto& u = pb.partition.unobservable;
    REQUIRE(pb.n_u() > 0);
    const auto c = exact_coupling(pb, select(pn, u), select(qn, u));
    const auto yo = observable_voltages(pb, select(pn, o), select(qn, o), c.k1, c.c2);
    for (std::size_t i = 0; i < o.size(); ++i) CHECK(std::abs(yo[i] - y_full[o[i]]) < 1e-9);

    // K1 = 0, C2 = Y0 collapses to (I + Koo)^-1 (Roo P + Xoo Q + Y0)
    const auto cp = constant_power(m);
    const auto bcp = partition_blocks(build_sensitivity(cp), make_partition(cp));
    const numkit::Matrix k1(bcp.n_o(), bcp.n_u());
    const auto po = testutil::random_vector(rng, bcp.n_o());
    const auto qo = testutil::random_vector(rng, bcp.n_o());
    const auto got = observable_voltages(bcp, po, qo, k1, bcp.y0_o);
    Eigen::VectorXd rhs = to_eigen(bcp.roo) * Eigen::Map<const Eigen::VectorXd>(po.data(), po.size()) +
                          to_eigen(bcp.xoo) * Eigen::Map<const Eigen::VectorXd>(qo.data(), qo.size()) +
                          Eigen::Map<const Eigen::VectorXd>(bcp.y0_o.data(), bcp.y0_o.size());
    const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(bcp.n_o(), bcp.n_o()) + to_eigen(bcp.koo);
    const Eigen::VectorXd want = lhs.partialPivLu().solve(rhs);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want(i)).epsilon(1e-12));
  }
}
