#include <benchmark/benchmark.h>

#include <random>

#include "gridcoord/milp.hpp"
#include "random_milp.hpp"

using namespace gridcoord;

namespace {

std::vector<milp::Model> instances(int binaries, int sos_sets) {
  std::mt19937_64 rng(7);
  std::vector<milp::Model> out;
  for (int i = 0; i < 16; ++i) out.push_back(testutil::random_milp(rng, {binaries, 8, sos_sets, 6}));
  return out;
}

void BM_SolveLp(benchmark::State& state) {
  const auto ms = instances(0, 0);
  std::size_t k = 0;
  for (auto _ : state) benchmark::DoNotOptimize(milp::solve_lp(ms[k++ % ms.size()]));
}
BENCHMARK(BM_SolveLp);

void BM_BranchAndBound(benchmark::State& state) {
  const auto ms = instances(static_cast<int>(state.range(0)), 2);
  std::size_t k = 0;
  std::uint64_t nodes = 0;
  for (auto _ : state) {
    const auto s = milp::solve_milp(ms[k++ % ms.size()]);
    nodes += s.nodes;
  }
  state.counters["nodes"] = benchmark::Counter(static_cast<double>(nodes), benchmark::Counter::kAvgIterations);
}
BENCHMARK(BM_BranchAndBound)->Arg(2)->Arg(6)->Arg(10);

}  // namespace
