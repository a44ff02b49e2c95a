#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <set>

#include "commands.hpp"
#include "gridcoord/data.hpp"
#include "gridcoord/io.hpp"

using namespace gridcoord;
namespace fs = std::filesystem;

namespace {

const fs::path kData = GRIDCOORD_TEST_DATA_DIR;

struct Run {
  int rc = -1;
  std::string err;
};

Run run_cli(const std::string& args) {
  const fs::path err = fs::temp_directory_path() / "gridcoord_cli_stderr.txt";
  const std::string cmd = std::string(GRIDCOORD_CLI_PATH) + " " + args + " > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = io::read_text_file(err);
  return r;
}

fs::path scratch(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("gridcoord_cli_" + tag);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit codes") {
    const auto out = scratch("codes");
    auto ok = run_cli("powerflow --scenario tiny-2bus --out " + out.string());
    CHECK(ok.rc == 0);
    const auto csv = io::read_text_file(out / "voltages.csv");
    CHECK(csv.rfind("# config ", 0) == 0);
    CHECK(csv.find("bus_phase,v_pu,y_pu2\n") != std::string::npos);

    const auto bad = out / "bad.json";
    {
      std::ofstream f(bad);
      f << "{\n  \"buses\": [1, 2,\n}\n";
    }
    const auto parse = run_cli("powerflow --feeder " + bad.string() + " --out " + out.string());
    CHECK(parse.rc == 4);
    CHECK(parse.err.find("bad.json:3:") != std::string::npos);

    CHECK(run_cli("powerflow --feeder " + (out / "missing.json").string()).rc == 4);
    CHECK(run_cli("stage1 --scenario tiny-2bus --encoding simplex").rc == 4);
    CHECK(run_cli("stage1 --scenario tiny-2bus --policy Nonsense --out " + out.string()).rc == 4);
    CHECK(run_cli("stage1 --scenario feeder13-extreme --policy VoltWatt --out " + out.string()).rc == 2);
    fs::remove_all(out);
  }

  TEST_CASE("repeatable outputs") {
    const auto a = scratch("rep_a"), b = scratch("rep_b");
    REQUIRE(run_cli("aggregate --scenario feeder13-lowpv --out " + a.string()).rc == 0);
    REQUIRE(run_cli("aggregate --scenario feeder13-lowpv --out " + b.string()).rc == 0);
    const auto ja = io::read_text_file(a / "aggregate.json");
    CHECK(ja == io::read_text_file(b / "aggregate.json"));
    CHECK(io::parse_json(ja).at("run").contains("config_hash"));

    REQUIRE(run_cli("tso --scenario case9-outage --out " + a.string()).rc == 0);
    REQUIRE(run_cli("tso --scenario case9-outage --zero-envelope --out " + b.string()).rc == 0);
    const auto ta = io::parse_json(io::read_text_file(a / "tso.json"));
    const auto tb = io::parse_json(io::read_text_file(b / "tso.json"));
    CHECK(ta.at("run").at("config_hash") != tb.at("run").at("config_hash"));
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("mode comparison rows") {
    const auto s = data::load_scenario("feeder13-lowpv", kData);
    const auto ctx = dispatch::make_context(s.feeder, s.fleet.specs, s.fleet.profile, s.irradiance);
    const auto rows = cli::compare_modes(ctx, false);
    REQUIRE(rows.size() == 5);
    std::set<std::string> labels;
    for (const auto& r : rows) {
      labels.insert(r.label);
      CHECK(r.feasible);
      CHECK(r.p_kw == doctest::Approx(rows.back().p_kw).epsilon(1e-6));
      CHECK(r.q_lo_kvar <= r.q_hi_kvar + 1e-6);
      CHECK(r.compliance <= 1e-6);
    }
    CHECK(labels.count("PQ-Free") == 1);
    CHECK(labels.count("Optimized") == 1);
    const auto csv = cli::comparison_csv(rows, "h");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2 + 5);
  }

  TEST_CASE("der count variants") {
    const auto m = io::load_feeder(kData / "feeders" / "feeder13.json");
    std::set<std::string> buses;
    for (const auto& d : m.ders) buses.insert(d.bus);
    for (std::size_t n : {3, 9, 21}) {
      const auto v = cli::with_der_count(m, n);
      CHECK(v.ders.size() == n);
      for (const auto& d : v.ders) CHECK(buses.count(d.bus) == 1);
    }
  }

  TEST_CASE("bench sweep") {
    const auto s = data::load_scenario("feeder13-highpv", kData);
    const auto cells = cli::bench_sweep(s.feeder, s.fleet.specs, s.fleet.profile, s.irradiance, {1},
                                        {inverter::Encoding::BigM, inverter::Encoding::Sos1});
    REQUIRE(cells.size() == 8);
    for (const auto& c : cells) {
      CHECK(c.status == "ok");
      CHECK(c.der_count == 1);
      CHECK(c.wall_ms < 1000.0);
    }
    const auto t = cli::bench_total(cells, "sos1", 1);
    CHECK(t.complete);
    double ms = 0.0;
    std::uint64_t nodes = 0;
    for (const auto& c : cells)
      if (c.encoding == "sos1") ms += c.wall_ms, nodes += c.nodes;
    CHECK(t.wall_ms == doctest::Approx(ms));
    CHECK(t.nodes == nodes);
    const auto csv = cli::bench_csv(cells);
    CHECK(csv.rfind("encoding,der_count,stage,wall_ms,simplex_iterations,nodes,status\n", 0) == 0);
  }
}
