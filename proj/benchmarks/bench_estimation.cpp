#include <benchmark/benchmark.h>

#include "geppo/estimation.hpp"
#include "geppo/rng.hpp"

using namespace geppo;

namespace {

EstimationInput make_batch(int n) {
  Rng rng(3);
  EstimationInput in;
  in.rewards = rng.normal_vector(n);
  in.values = rng.normal_vector(n);
  in.next_values = rng.normal_vector(n);
  in.log_ratio = 0.2 * rng.normal_vector(n);
  in.terminal.assign(n, 0);
  in.truncated.assign(n, 0);
  for (int t = 99; t < n; t += 100) in.truncated[t] = 1;
  return in;
}

}  // namespace

static void BM_Gae(benchmark::State& state) {
  const EstimationInput in = make_batch(static_cast<int>(state.range(0)));
  EstimatorConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(gae(in, cfg));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Gae)->Arg(1024)->Arg(4096);

static void BM_Vtrace(benchmark::State& state) {
  const EstimationInput in = make_batch(static_cast<int>(state.range(0)));
  EstimatorConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(vtrace_targets(in, cfg));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Vtrace)->Arg(1024)->Arg(4096);

BENCHMARK_MAIN();
