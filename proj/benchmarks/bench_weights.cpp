#include <benchmark/benchmark.h>

#include "geppo/weights.hpp"

using namespace geppo;

static void BM_SolveEssopt(benchmark::State& state) {
  const int B = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_essopt(B, 4 * B));
  }
}
BENCHMARK(BM_SolveEssopt)->Arg(2)->Arg(8);

static void BM_SolveTvopt(benchmark::State& state) {
  const int B = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_tvopt(B, 3 * B));
  }
}
BENCHMARK(BM_SolveTvopt)->Arg(2)->Arg(8);

static void BM_GridOracle(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(grid_oracle(WeightProgram::essopt, 2, 5, 1e-2));
  }
}
BENCHMARK(BM_GridOracle);

BENCHMARK_MAIN();
