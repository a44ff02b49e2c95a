#include <benchmark/benchmark.h>

#include <random>

#include "gridcoord/data.hpp"
#include "gridcoord/estimator.hpp"
#include "gridcoord/feeder.hpp"
#include "gridcoord/tso.hpp"

using namespace gridcoord;

namespace {

const std::filesystem::path kData = GRIDCOORD_BENCH_DATA_DIR;

void BM_Sensitivity(benchmark::State& state) {
  const auto s = data::load_scenario("feeder40", kData);
  for (auto _ : state) benchmark::DoNotOptimize(feeder::build_sensitivity(s.feeder));
}
BENCHMARK(BM_Sensitivity)->Unit(benchmark::kMicrosecond);

void BM_SweepOracle(benchmark::State& state) {
  const auto s = data::load_scenario(state.range(0) == 0 ? "feeder13-highpv" : "feeder40", kData);
  std::vector<double> pg(s.feeder.node_count(), 0.0), qg(s.feeder.node_count(), 0.0);
  for (const auto& d : s.feeder.ders)
    pg[*s.feeder.node_index(d.bus + "." + feeder::phase_letter(d.phase))] += s.fleet.find(d.inverter_id).p_max;
  for (auto _ : state) benchmark::DoNotOptimize(feeder::bfm_oracle(s.feeder, pg, qg));
}
BENCHMARK(BM_SweepOracle)->ArgName("f40")->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_Newton(benchmark::State& state) {
  const auto c = tso::load_case(kData / "transmission" / "case9.json");
  for (auto _ : state) benchmark::DoNotOptimize(tso::newton_powerflow(c));
}
BENCHMARK(BM_Newton)->Unit(benchmark::kMicrosecond);

void BM_TsoDispatch(benchmark::State& state) {
  const auto c = tso::remove_branch(tso::load_case(kData / "transmission" / "case9.json"), 4, 9);
  for (auto _ : state) benchmark::DoNotOptimize(tso::tso_dispatch(c));
}
BENCHMARK(BM_TsoDispatch)->Unit(benchmark::kMillisecond);

void BM_RlsUpdate(benchmark::State& state) {
  const auto s = data::load_scenario("rls10", kData);
  const auto blocks = feeder::build_sensitivity(s.feeder);
  const auto pb = feeder::partition_blocks(blocks, feeder::make_partition(s.feeder));
  std::vector<double> p_u(pb.n_u()), q_u(pb.n_u());
  for (std::size_t i = 0; i < pb.n_u(); ++i) p_u[i] = -pb.p0_u[i], q_u[i] = -pb.q0_u[i];
  const auto truth = feeder::exact_coupling(pb, p_u, q_u);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<estimator::Regressor> regs;
  estimator::MeasurementSample first;
  for (int k = 0; k < 64; ++k) {
    std::vector<double> pg(s.feeder.node_count(), 0.0), qg(s.feeder.node_count(), 0.0);
    for (const auto& d : s.feeder.ders) {
      const auto n = *s.feeder.node_index(d.bus + "." + feeder::phase_letter(d.phase));
      const auto& spec = s.fleet.find(d.inverter_id);
      pg[n] += 0.5 * (u(rng) + 1.0) * spec.p_max;
      qg[n] += u(rng) * spec.q_max;
    }
    estimator::MeasurementSample m;
    m.p_o = feeder::select(feeder::constant_injection(pg, blocks.loads.p0), pb.partition.observable);
    m.q_o = feeder::select(feeder::constant_injection(qg, blocks.loads.q0), pb.partition.observable);
    m.y_o = feeder::observable_voltages(pb, m.p_o, m.q_o, truth.k1, truth.c2);
    if (k == 0) first = m;
    regs.push_back(estimator::build_regressor(m, pb));
  }

  auto st = estimator::init_state(pb, first);
  std::size_t k = 0;
  for (auto _ : state) estimator::rls_update(st, regs[k++ % regs.size()]);
}
BENCHMARK(BM_RlsUpdate)->Unit(benchmark::kMicrosecond);

}  // namespace
