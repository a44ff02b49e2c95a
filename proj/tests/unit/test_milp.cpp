#include <doctest.h>

#include <random>

#include "gridcoord/error.hpp"
#include "gridcoord/milp.hpp"
#include "random_milp.hpp"

using namespace gridcoord;
using namespace gridcoord::milp;

TEST_SUITE("milp") {
  TEST_CASE("model building") {
    Model m;
    const auto x = m.add_variable("x", 1.0, kInf);
    m.set_objective(ObjSense::Minimize, {{x, 1.0}});
    const auto sol = solve_milp(m);
    REQUIRE(sol.optimal());
    CHECK(sol.objective == doctest::Approx(1.0));

    const auto y = m.add_variable("y", 0.0, 1.0);
    m.add_sos1("dup", {x, y, x});
    CHECK(m.sos1_sets().back().members == std::vector<std::size_t>{x, y});

    try {
      m.add_constraint("bad", {{42, 1.0}}, Sense::LessEqual, 1.0);
      FAIL("expected UnknownVariable");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::UnknownVariable);
    }
  }

  TEST_CASE("small LPs") {
    Model a;
    const auto x = a.add_variable("x", -kInf, kInf);
    a.add_constraint("lo", {{x, 1.0}}, Sense::GreaterEqual, 2.0);
    a.add_constraint("hi", {{x, 1.0}}, Sense::LessEqual, 5.0);
    a.set_objective(ObjSense::Minimize, {{x, 1.0}});
    auto s = solve_lp(a);
    REQUIRE(s.optimal());
    CHECK(s.values[x] == doctest::Approx(2.0));
    CHECK(s.objective == doctest::Approx(2.0));

    Model b;
    const auto p = b.add_variable("x", 0.0, kInf), q = b.add_variable("y", 0.0, kInf);
    b.add_constraint("cap", {{p, 1.0}, {q, 1.0}}, Sense::LessEqual, 1.0);
    b.set_objective(ObjSense::Maximize, {{p, 1.0}, {q, 1.0}});
    s = solve_lp(b);
    REQUIRE(s.optimal());
    CHECK(s.objective == doctest::Approx(1.0));
  }

  TEST_CASE("infeasible and unbounded LPs") {
    Model a;
    const auto x = a.add_variable("x", 0.0, 1.0);
    a.add_constraint("c", {{x, 1.0}}, Sense::GreaterEqual, 2.0);
    CHECK(solve_lp(a).status == Status::Infeasible);
    CHECK(solve_milp(a).status == Status::Infeasible);

    Model b;
    const auto y = b.add_variable("y", 0.0, kInf);
    b.set_objective(ObjSense::Maximize, {{y, 1.0}});
    CHECK(solve_lp(b).status == Status::Unbounded);
  }

  TEST_CASE("equality rows and free variables") {
    Model m;
    const auto x = m.add_variable("x", -kInf, kInf), y = m.add_variable("y", -3.0, 3.0);
    m.add_constraint("sum", {{x, 1.0}, {y, 2.0}}, Sense::Equal, 1.0);
    m.set_objective(ObjSense::Minimize, {{x, 1.0}});
    const auto s = solve_lp(m);
    REQUIRE(s.optimal());
    CHECK(s.values[y] == doctest::Approx(3.0));
    CHECK(s.values[x] == doctest::Approx(-5.0));
  }

  TEST_CASE("random LPs match vertex enumeration") {
    std::mt19937_64 rng(2024);
    int checked = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const auto m = testutil::random_milp(rng, {0, 2 + static_cast<int>(rng() % 4), 0, 2 + static_cast<int>(rng() % 4)});
      std::vector<double> lo, hi;
      for (const auto& v : m.variables()) {
        lo.push_back(v.lower);
        hi.push_back(v.upper);
      }
      const auto oracle = testutil::lp_by_vertices(m, lo, hi);
      const auto sol = solve_lp(m);
      REQUIRE(oracle.has_value());
      REQUIRE(sol.optimal());
      CHECK(sol.objective == doctest::Approx(*oracle).epsilon(1e-6));
      CHECK(m.max_violation(sol.values) < 1e-7);
      ++checked;
    }
    CHECK(checked == 50);
  }

  TEST_CASE("pure LP through branch and bound") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const auto m = testutil::random_milp(rng, {0, 6, 0, 5});
      const auto a = solve_lp(m), b = solve_milp(m);
      REQUIRE(a.optimal());
      REQUIRE(b.optimal());
      CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-9));
      CHECK(b.nodes == 1);
    }
  }

  TEST_CASE("knapsack") {
    Model m;
    const auto a = m.add_binary("a"), b = m.add_binary("b");
    m.add_constraint("cap", {{a, 1.0}, {b, 1.0}}, Sense::LessEqual, 1.0);
    m.set_objective(ObjSense::Maximize, {{a, 3.0}, {b, 2.0}});
    const auto s = solve_milp(m);
    REQUIRE(s.optimal());
    CHECK(s.objective == doctest::Approx(3.0));
    CHECK(s.values[a] == 1.0);
  }

  TEST_CASE("SOS1 branching keeps one member nonzero") {
    Model m;
    std::vector<std::size_t> xs;
    for (int i = 0; i < 4; ++i) xs.push_back(m.add_variable("x" + std::to_string(i), 0.0, 1.0));
    m.add_sos1("one", xs);
    m.add_constraint("budget", {{xs[0], 1.0}, {xs[1], 1.0}, {xs[2], 1.0}, {xs[3], 1.0}}, Sense::LessEqual, 1.5);
    m.set_objective(ObjSense::Maximize, {{xs[0], 1.0}, {xs[1], 2.0}, {xs[2], 1.5}, {xs[3], 0.5}});
    const auto s = solve_milp(m);
    REQUIRE(s.optimal());
    CHECK(s.objective == doctest::Approx(2.0));
    int nonzero = 0;
    for (auto v : xs) nonzero += s.values[v] > 1e-9;
    CHECK(nonzero == 1);
  }

  TEST_CASE("brute force LP counts") {
    Model one;
    const auto b = one.add_binary("b");
    one.set_objective(ObjSense::Maximize, {{b, 1.0}});
    CHECK(brute_force(one).nodes == 2);

    Model sos;
    std::vector<std::size_t> xs;
    for (int i = 0; i < 5; ++i) xs.push_back(sos.add_variable("x" + std::to_string(i), 0.0, 1.0));
    sos.add_sos1("s", xs);
    sos.set_objective(ObjSense::Maximize, {{xs[2], 1.0}});
    const auto s = brute_force(sos);
    CHECK((s.nodes == 5 || s.nodes == 6));
    CHECK(s.objective == doctest::Approx(1.0));
  }

  TEST_CASE("brute force refuses huge enumerations") {
    Model m;
    for (int i = 0; i < 22; ++i) m.add_binary("b" + std::to_string(i));
    try {
      brute_force(m);
      FAIL("expected TooLarge");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::TooLarge);
    }
  }

  TEST_CASE("random MILPs: branch and bound, brute force and independent enumeration agree") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 40; ++trial) {
      const testutil::MilpShape shape{static_cast<int>(rng() % 4), 2 + static_cast<int>(rng() % 3),
                                      static_cast<int>(rng() % 2), 2 + static_cast<int>(rng() % 2)};
      const auto m = testutil::random_milp(rng, shape);
      const auto bb = solve_milp(m);
      const auto bf = brute_force(m);
      const auto oracle = testutil::milp_by_enumeration(m);
      REQUIRE(oracle.has_value());
      REQUIRE(bb.optimal());
      REQUIRE(bf.optimal());
      CHECK(bb.objective == doctest::Approx(*oracle).epsilon(1e-6));
      CHECK(bf.objective == doctest::Approx(*oracle).epsilon(1e-6));
    }
  }

  TEST_CASE("lp dump lists every section") {
    Model m;
    const auto b = m.add_binary("pick");
    const auto x = m.add_variable("x", 0.0, 2.0);
    m.add_sos1("s", {x});
    m.add_constraint("row", {{b, 1.0}, {x, -1.0}}, Sense::LessEqual, 0.0);
    m.set_objective(ObjSense::Maximize, {{x, 1.0}});
    const auto text = m.to_lp_string();
    for (const char* needle : {"Maximize", "row", "Bounds", "pick", "s:"}) CHECK(text.find(needle) != std::string::npos);
  }
}
