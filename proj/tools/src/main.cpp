// gridcoord command-line front end.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "gridcoord/coordinate.hpp"
#include "gridcoord/data.hpp"
#include "gridcoord/dispatch.hpp"
#include "gridcoord/error.hpp"
#include "gridcoord/io.hpp"
#include "gridcoord/results.hpp"
#include "gridcoord/tso.hpp"

namespace fs = std::filesystem;
using namespace gridcoord;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInfeasible = 2;
constexpr int kExitNoConvergence = 3;
constexpr int kExitInput = 4;

struct Options {
  std::string scenario;
  std::string feeder;
  std::string inverters;
  std::string transmission;
  std::string config;
  std::string encoding = "sos1";
  std::string policy = "optimized";
  std::string out = ".";
  std::string outage;
  std::string der_sweep = "3,6,9,12,15,18,21";
  double irradiance = 1.0;
  double load_scale = 1.0;
  std::optional<double> eps;
  std::optional<double> lambda;
  std::optional<int> max_iters;
  std::optional<double> q_req_kvar;
  bool zero_envelope = false;
  bool timing = false;
  int seed = 0;
};

struct Inputs {
  feeder::FeederModel feeder;
  io::InverterFleet fleet;
  std::optional<tso::TransmissionCase> transmission;
  double irradiance = 1.0;
  std::string canonical;  ///< bytes that identify the run
};

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw Error(ErrorKind::ValidationError, "'" + s + "' is not a comma-separated integer list");
    }
  }
  return out;
}

inverter::Encoding parse_encoding(const std::string& s) {
  if (s == "bigm") return inverter::Encoding::BigM;
  if (s == "sos1") return inverter::Encoding::Sos1;
  throw Error(ErrorKind::ValidationError, "encoding must be bigm or sos1");
}

dispatch::Policy parse_policy(const std::string& s) {
  if (s == "optimized") return dispatch::Policy::optimized();
  if (s == "pq-free") return dispatch::Policy::pq_free();
  std::string name = s;
  bool free_setting = false;
  if (const auto pos = s.find("-setting"); pos != std::string::npos) {
    name = s.substr(0, pos);
    free_setting = true;
  }
  const auto mode = inverter::mode_from_string(name);
  if (!mode) throw Error(ErrorKind::ValidationError, "unknown policy '" + s + "'");
  return dispatch::Policy::forced(*mode, free_setting);
}

std::string options_fingerprint(const Options& o, const std::string& command) {
  return fmt::format("cmd={};enc={};policy={};irr={};scale={};outage={};sweep={};eps={};lambda={};iters={};q={};zero={};seed={}",
                     command, o.encoding, o.policy, o.irradiance, o.load_scale, o.outage, o.der_sweep,
                     o.eps.value_or(-1.0), o.lambda.value_or(-1.0), o.max_iters.value_or(-1),
                     o.q_req_kvar.value_or(0.0), o.zero_envelope, o.seed);
}

Inputs load_inputs(const Options& o, const std::string& command, bool need_fleet) {
  Inputs in;
  in.canonical = options_fingerprint(o, command);
  if (!o.scenario.empty()) {
    auto s = data::load_scenario(o.scenario);
    in.feeder = std::move(s.feeder);
    in.fleet = std::move(s.fleet);
    in.transmission = std::move(s.transmission);
    in.irradiance = s.irradiance;
    in.canonical += io::read_text_file(s.file);
    if (s.outage && in.transmission && o.outage.empty())
      in.transmission = tso::remove_branch(*in.transmission, s.outage->first, s.outage->second);
  } else {
    if (o.feeder.empty()) throw Error(ErrorKind::ValidationError, "either --scenario or --feeder is required");
    in.feeder = io::load_feeder(o.feeder);
    if (o.load_scale != 1.0) in.feeder = data::scale_loads(std::move(in.feeder), o.load_scale);
    in.canonical += io::read_text_file(o.feeder);
    if (!o.inverters.empty()) {
      in.fleet = io::load_fleet(o.inverters, in.feeder.base);
      in.canonical += io::read_text_file(o.inverters);
    }
    in.irradiance = o.irradiance;
  }
  if (!o.transmission.empty()) {
    in.transmission = tso::load_case(o.transmission);
    in.canonical += io::read_text_file(o.transmission);
  }
  if (!o.outage.empty() && in.transmission) {
    const auto ab = parse_int_list(o.outage);
    if (ab.size() != 2) throw Error(ErrorKind::ValidationError, "--outage expects FROM,TO");
    in.transmission = tso::remove_branch(*in.transmission, ab[0], ab[1]);
  }
  if (need_fleet && in.fleet.specs.empty())
    throw Error(ErrorKind::ValidationError, "an inverter file is required (--inverters)");
  return in;
}

void write_file(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::ValidationError, "cannot write " + path.string());
  out << text;
  spdlog::info("wrote {}", path.string());
}

nlohmann::json run_metadata(const Options& o, const std::string& hash) {
  return {{"tool", "gridcoord"},
          {"version", GRIDCOORD_VERSION},
          {"config_hash", hash},
          {"encoding", o.encoding},
          {"policy", o.policy},
          {"seed", o.seed}};
}

dispatch::DispatchContext make_ctx(const Inputs& in, const Options& o) {
  auto ctx = dispatch::make_context(in.feeder, in.fleet.specs, in.fleet.profile, in.irradiance);
  ctx.encoding = parse_encoding(o.encoding);
  ctx.policy = parse_policy(o.policy);
  return ctx;
}

int cmd_powerflow(const Options& o) {
  const auto in = load_inputs(o, "powerflow", false);
  const auto hash = results::config_hash(in.canonical);
  const std::vector<double> zeros(in.feeder.node_count(), 0.0);
  const auto pf = feeder::bfm_oracle(in.feeder, zeros, zeros);
  write_file(fs::path(o.out) / "voltages.csv", results::voltages_csv(in.feeder, pf.vmag, hash));
  std::cout << fmt::format("converged in {} sweeps, substation export P={:.2f} kW Q={:.2f} kvar\n", pf.sweeps,
                           pf.p_export() * in.feeder.base.s_kva, pf.q_export() * in.feeder.base.s_kva);
  return kExitOk;
}

int cmd_dispatch_stage(const Options& o, const std::string& command) {
  const auto in = load_inputs(o, command, true);
  const auto hash = results::config_hash(in.canonical);
  const auto ctx = make_ctx(in, o);
  dispatch::DispatchResult r;
  if (command == "stage1") {
    r = dispatch::stage1_max_power(ctx);
  } else {
    r = dispatch::aggregate(ctx);
    if (command == "disaggregate") {
      const double q_req = o.q_req_kvar ? *o.q_req_kvar / in.feeder.base.s_kva : 0.5 * (r.q_lo + r.q_hi);
      auto d = dispatch::stage2b_disaggregate(ctx, r.p_star, q_req);
      d.q_lo = r.q_lo;
      d.q_hi = r.q_hi;
      r = std::move(d);
    }
  }
  auto doc = results::dispatch_to_json(ctx, r);
  doc["run"] = run_metadata(o, hash);
  write_file(fs::path(o.out) / (command + ".json"), doc.dump(2) + "\n");
  std::cout << fmt::format("P* = {:.3f} kW", r.p_star * in.feeder.base.s_kva);
  if (command != "stage1")
    std::cout << fmt::format(", Q envelope [{:.3f}, {:.3f}] kvar", r.q_lo * in.feeder.base.s_kva,
                             r.q_hi * in.feeder.base.s_kva);
  std::cout << "\n";
  return kExitOk;
}

int cmd_tso(const Options& o) {
  const auto in = load_inputs(o, "tso", false);
  if (!in.transmission) throw Error(ErrorKind::ValidationError, "--transmission is required");
  const auto hash = results::config_hash(in.canonical);
  const auto& c = *in.transmission;
  std::vector<double> lo, hi;
  if (o.zero_envelope) {
    lo.assign(c.interfaces.size(), 0.0);
    hi.assign(c.interfaces.size(), 0.0);
  }
  const auto d = tso::tso_dispatch(c, lo, hi);
  nlohmann::json doc;
  doc["run"] = run_metadata(o, hash);
  doc["iterations"] = d.iterations;
  doc["objective"] = d.objective;
  doc["worst_deviation"] = d.worst_deviation;
  nlohmann::json ifs = nlohmann::json::array();
  for (std::size_t i = 0; i < c.interfaces.size(); ++i)
    ifs.push_back({{"bus", c.interfaces[i].bus}, {"q_req_mvar", d.q_req_mvar[i]}});
  doc["interfaces"] = ifs;
  nlohmann::json buses = nlohmann::json::array();
  for (std::size_t k = 0; k < c.buses.size(); ++k) buses.push_back({{"bus", c.buses[k].id}, {"vm", d.vm[k]}});
  doc["buses"] = buses;
  write_file(fs::path(o.out) / "tso.json", doc.dump(2) + "\n");
  for (std::size_t k = 0; k < c.buses.size(); ++k) std::cout << fmt::format("bus {:>3}  {:.5f} pu\n", c.buses[k].id, d.vm[k]);
  return kExitOk;
}

const char* kTracePlot = R"(# gnuplot script: plot the coordination trace written next to it
set datafile separator ","
set key left top
set xlabel "iteration"
set ylabel "kvar"
plot "trace.csv" every ::2 using 1:5 with linespoints title "Q requested", \
     "trace.csv" every ::2 using 1:6 with linespoints title "Q measured", \
     "trace.csv" every ::2 using 1:3 with lines dashtype 2 title "Q min", \
     "trace.csv" every ::2 using 1:4 with lines dashtype 2 title "Q max"
pause -1
)";

int cmd_coordinate(const Options& o) {
  if (o.config.empty()) throw Error(ErrorKind::ValidationError, "--config is required");
  auto cfg = coordinate::load_config(o.config);
  if (o.eps) cfg.eps_kvar = *o.eps;
  if (o.lambda) cfg.rls.lambda = *o.lambda;
  if (o.max_iters) cfg.max_iters = *o.max_iters;
  if (o.encoding != "sos1") cfg.encoding = parse_encoding(o.encoding);
  cfg.validate();
  const auto hash = results::config_hash(options_fingerprint(o, "coordinate") + io::read_text_file(o.config));
  const auto r = coordinate::run_coordination(cfg);
  const fs::path out(o.out);
  write_file(out / "trace.csv", results::trace_csv(r, hash, o.timing));
  write_file(out / "trace.gp", kTracePlot);
  for (std::size_t i = 0; i < r.final_dispatch.size(); ++i) {
    auto doc = results::dispatch_to_json(r.final_context[i], r.final_dispatch[i], false);
    doc["run"] = run_metadata(o, hash);
    doc["interface_bus"] = cfg.feeders[i].interface_bus;
    write_file(out / fmt::format("dispatch_bus{}.json", cfg.feeders[i].interface_bus), doc.dump(2) + "\n");
  }
  if (o.timing) write_file(out / "timings.json", results::timings_json(r).dump(2) + "\n");
  std::cout << fmt::format("{} after {} iterations\n", r.status, r.trace.size());
  return r.converged ? kExitOk : kExitNoConvergence;
}

int cmd_compare_modes(const Options& o) {
  const auto in = load_inputs(o, "compare-modes", true);
  const auto hash = results::config_hash(in.canonical);
  const auto ctx = make_ctx(in, o);
  const auto rows = cli::compare_modes(ctx, true);
  write_file(fs::path(o.out) / "modes.csv", cli::comparison_csv(rows, hash));
  std::cout << cli::comparison_text(rows);
  return kExitOk;
}

const char* kBenchPlot = R"(# gnuplot script: total B&B nodes per DER count for each encoding
set datafile separator ","
set logscale y
set xlabel "DER count"
set ylabel "nodes"
plot "< awk -F, '$1==\"sos1\"' bench.csv" using 2:6 smooth frequency with linespoints title "sos1", \
     "< awk -F, '$1==\"bigm\"' bench.csv" using 2:6 smooth frequency with linespoints title "bigm"
pause -1
)";

int cmd_bench(const Options& o) {
  const auto in = load_inputs(o, "bench", true);
  std::vector<std::size_t> counts;
  for (int n : parse_int_list(o.der_sweep)) {
    if (n < 1) throw Error(ErrorKind::ValidationError, "DER counts must be positive");
    counts.push_back(static_cast<std::size_t>(n));
  }
  const auto cells = cli::bench_sweep(in.feeder, in.fleet.specs, in.fleet.profile, in.irradiance, counts,
                                      {inverter::Encoding::BigM, inverter::Encoding::Sos1});
  write_file(fs::path(o.out) / "bench.csv", cli::bench_csv(cells));
  write_file(fs::path(o.out) / "bench.gp", kBenchPlot);
  std::cout << fmt::format("{:>6}{:>14}{:>12}{:>14}{:>12}\n", "DERs", "bigm ms", "bigm nodes", "sos1 ms", "sos1 nodes");
  for (std::size_t n : counts) {
    const auto b = cli::bench_total(cells, "bigm", n);
    const auto s = cli::bench_total(cells, "sos1", n);
    std::cout << fmt::format("{:>6}{:>14.1f}{:>12}{:>14.1f}{:>12}\n", n, b.wall_ms, b.nodes, s.wall_ms, s.nodes);
  }
  return kExitOk;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::InfeasibleStage: return kExitInfeasible;
    case ErrorKind::NoConvergence:
    case ErrorKind::MaxItersExceeded: return kExitNoConvergence;
    case ErrorKind::ParseError:
    case ErrorKind::ValidationError:
    case ErrorKind::InvalidPartition:
    case ErrorKind::InvalidProfile:
    case ErrorKind::UnknownVariable:
    case ErrorKind::ChecksumMismatch: return kExitInput;
    default: return 1;
  }
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("gridcoord");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("GRIDCOORD_LOG");
  const std::string level = env ? env : "error";
  if (level == "debug")
    spdlog::set_level(spdlog::level::debug);
  else if (level == "info")
    spdlog::set_level(spdlog::level::info);
  else
    spdlog::set_level(spdlog::level::err);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Coordinated TSO-DSO reactive power dispatch with smart-inverter droop control"};
  app.require_subcommand(1);
  Options o;

  auto add_inputs = [&](CLI::App* sub) {
    sub->add_option("--scenario", o.scenario, "Bundled scenario name");
    sub->add_option("--feeder", o.feeder, "Feeder JSON")->check(CLI::ExistingFile);
    sub->add_option("--inverters", o.inverters, "Inverter fleet JSON")->check(CLI::ExistingFile);
    sub->add_option("--transmission", o.transmission, "Transmission case JSON")->check(CLI::ExistingFile);
    sub->add_option("--irradiance", o.irradiance, "Fraction of rated DER power available");
    sub->add_option("--load-scale", o.load_scale, "Multiplier on every load");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--seed", o.seed, "Run seed");
  };
  auto add_dispatch = [&](CLI::App* sub) {
    sub->add_option("--encoding", o.encoding, "Droop encoding")->check(CLI::IsMember({"bigm", "sos1"}));
    sub->add_option("--policy", o.policy, "optimized, pq-free, or a mode name (append -setting for a free setting)");
  };

  auto* powerflow = app.add_subcommand("powerflow", "Nonlinear feeder power flow without DER output");
  add_inputs(powerflow);
  auto* stage1 = app.add_subcommand("stage1", "Maximize total DER real power");
  add_inputs(stage1);
  add_dispatch(stage1);
  auto* aggregate = app.add_subcommand("aggregate", "Real-power maximization and reactive envelope");
  add_inputs(aggregate);
  add_dispatch(aggregate);
  auto* disaggregate = app.add_subcommand("disaggregate", "Dispatch DERs for a substation reactive request");
  add_inputs(disaggregate);
  add_dispatch(disaggregate);
  disaggregate->add_option("--q-req", o.q_req_kvar, "Requested substation export in kvar (default: envelope midpoint)");
  auto* tso_cmd = app.add_subcommand("tso", "Transmission reactive dispatch over the interface envelopes");
  add_inputs(tso_cmd);
  tso_cmd->add_option("--outage", o.outage, "Remove branch FROM,TO");
  tso_cmd->add_flag("--zero-envelope", o.zero_envelope, "Force every interface envelope to zero");
  auto* coord = app.add_subcommand("coordinate", "Closed-loop TSO-DSO coordination");
  coord->add_option("--config", o.config, "Coordination config JSON")->required()->check(CLI::ExistingFile);
  coord->add_option("--encoding", o.encoding, "Droop encoding")->check(CLI::IsMember({"bigm", "sos1"}));
  coord->add_option("--eps", o.eps, "Absolute convergence tolerance in kvar");
  coord->add_option("--lambda", o.lambda, "Forgetting factor of the estimator");
  coord->add_option("--max-iters", o.max_iters, "Iteration limit");
  coord->add_option("--out", o.out, "Output directory");
  coord->add_flag("--timing", o.timing, "Also write stage timings (timings.json)");
  auto* compare = app.add_subcommand("compare-modes", "Per-mode, PQ-free and optimized capability comparison");
  add_inputs(compare);
  compare->add_option("--encoding", o.encoding, "Droop encoding")->check(CLI::IsMember({"bigm", "sos1"}));
  auto* bench = app.add_subcommand("bench", "Encoding runtime and node counts over a DER sweep");
  add_inputs(bench);
  bench->add_option("--der-sweep", o.der_sweep, "Comma-separated DER counts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*powerflow) return cmd_powerflow(o);
    if (*stage1) return cmd_dispatch_stage(o, "stage1");
    if (*aggregate) return cmd_dispatch_stage(o, "aggregate");
    if (*disaggregate) return cmd_dispatch_stage(o, "disaggregate");
    if (*tso_cmd) return cmd_tso(o);
    if (*coord) return cmd_coordinate(o);
    if (*compare) return cmd_compare_modes(o);
    if (*bench) return cmd_bench(o);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
