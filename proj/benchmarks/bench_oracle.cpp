#include <benchmark/benchmark.h>

#include "geppo/certify.hpp"
#include "geppo/rng.hpp"
#include "geppo/tabular.hpp"

using namespace geppo;

static void BM_SolvePolicy(benchmark::State& state) {
  Rng rng(1);
  const TabularMdp mdp =
      random_mdp(rng, static_cast<int>(state.range(0)), 4, 0.9, 0.9);
  const TabularPolicy pi = random_policy(rng, mdp.num_states, mdp.num_actions);
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_policy(mdp, pi));
  }
}
BENCHMARK(BM_SolvePolicy)->Arg(6)->Arg(20)->Arg(50);

static void BM_VerifyGeneralizedBound(benchmark::State& state) {
  Rng rng(2);
  const TabularMdp mdp = random_mdp(rng);
  std::vector<TabularPolicy> priors;
  const auto m = state.range(0);
  for (int i = 0; i < m; ++i) {
    priors.push_back(random_policy(rng, mdp.num_states, mdp.num_actions));
  }
  const Eigen::VectorXd nu = Eigen::VectorXd::Constant(m, 1.0 / double(m));
  const TabularPolicy pi = random_policy(rng, mdp.num_states, mdp.num_actions);
  for (auto _ : state) {
    benchmark::DoNotOptimize(verify_lb_generalized(mdp, priors, nu, pi));
  }
}
BENCHMARK(BM_VerifyGeneralizedBound)->Arg(1)->Arg(4);

BENCHMARK_MAIN();
