#include <benchmark/benchmark.h>

#include "gridcoord/data.hpp"
#include "gridcoord/dispatch.hpp"

using namespace gridcoord;

namespace {

dispatch::DispatchContext highpv(inverter::Encoding enc) {
  static const auto s = data::load_scenario("feeder13-highpv", GRIDCOORD_BENCH_DATA_DIR);
  auto ctx = dispatch::make_context(s.feeder, s.fleet.specs, s.fleet.profile, s.irradiance);
  ctx.encoding = enc;
  return ctx;
}

inverter::Encoding encoding_arg(const benchmark::State& state) {
  return state.range(0) == 0 ? inverter::Encoding::BigM : inverter::Encoding::Sos1;
}

void BM_Stage1(benchmark::State& state) {
  const auto ctx = highpv(encoding_arg(state));
  for (auto _ : state) benchmark::DoNotOptimize(dispatch::stage1_max_power(ctx));
}
BENCHMARK(BM_Stage1)->ArgName("sos")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Aggregate(benchmark::State& state) {
  const auto ctx = highpv(encoding_arg(state));
  for (auto _ : state) benchmark::DoNotOptimize(dispatch::aggregate(ctx));
}
BENCHMARK(BM_Aggregate)->ArgName("sos")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Disaggregate(benchmark::State& state) {
  const auto ctx = highpv(encoding_arg(state));
  const auto agg = dispatch::aggregate(ctx);
  const double mid = 0.5 * (agg.q_lo + agg.q_hi);
  for (auto _ : state) benchmark::DoNotOptimize(dispatch::stage2b_disaggregate(ctx, agg.p_star, mid));
}
BENCHMARK(BM_Disaggregate)->ArgName("sos")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
