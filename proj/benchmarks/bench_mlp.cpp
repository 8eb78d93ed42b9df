#include <benchmark/benchmark.h>

#include "geppo/mlp.hpp"
#include "geppo/rng.hpp"

using namespace geppo;

static void BM_PolicyLogprobBatch(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  GaussianPolicy policy(4, {64, 64}, 2);
  Rng rng(1);
  const Eigen::VectorXd theta = policy.init_params(
      rng, Eigen::VectorXd::Constant(2, -1.0), Eigen::VectorXd::Constant(2, 1.0),
      1.0);
  Eigen::MatrixXd obs(4, batch), act(2, batch);
  for (int s = 0; s < batch; ++s) {
    obs.col(s) = rng.normal_vector(4);
    act.col(s) = rng.normal_vector(2);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(policy.logprob_batch(theta, obs, act));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_PolicyLogprobBatch)->Arg(1)->Arg(128)->Arg(1024);

static void BM_PolicyGradBatch(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  GaussianPolicy policy(4, {64, 64}, 2);
  Rng rng(2);
  const Eigen::VectorXd theta = policy.init_params(
      rng, Eigen::VectorXd::Constant(2, -1.0), Eigen::VectorXd::Constant(2, 1.0),
      1.0);
  Eigen::MatrixXd obs(4, batch), act(2, batch);
  Eigen::VectorXd coeff(batch);
  for (int s = 0; s < batch; ++s) {
    obs.col(s) = rng.normal_vector(4);
    act.col(s) = rng.normal_vector(2);
    coeff[s] = rng.uniform(-1.0, 1.0);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        policy.weighted_logprob_grad(theta, obs, act, coeff));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_PolicyGradBatch)->Arg(128)->Arg(1024);

BENCHMARK_MAIN();
