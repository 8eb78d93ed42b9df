#include "geppo/estimation.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "geppo/rng.hpp"
#include "geppo/tabular.hpp"

using namespace geppo;

namespace {

EstimationInput random_batch(Rng& rng, int n, bool off_policy) {
  EstimationInput in;
  in.rewards = rng.normal_vector(n);
  in.values = rng.normal_vector(n);
  in.next_values = rng.normal_vector(n);
  in.log_ratio = off_policy ? Eigen::VectorXd(0.3 * rng.normal_vector(n))
                            : Eigen::VectorXd(Eigen::VectorXd::Zero(n));
  in.terminal.assign(n, 0);
  in.truncated.assign(n, 0);
  for (int t = 0; t < n; ++t) {
    const double u = rng.uniform();
    if (u < 0.1) {
      in.terminal[t] = 1;
    } else if (u < 0.2) {
      in.truncated[t] = 1;
    }
  }
  return in;
}

/// O(T^2) oracle: the explicit lambda-weighted sum over K-step estimates,
/// with per-step truncated correction ratios.
Eigen::VectorXd brute_force_advantage(const EstimationInput& in,
                                      const EstimatorConfig& cfg,
                                      bool correct) {
  const int n = in.size();
  const Eigen::VectorXd c = truncated_ratios(in.log_ratio, cfg.c_bar);
  Eigen::VectorXd adv = Eigen::VectorXd::Zero(n);
  for (int t = 0; t < n; ++t) {
    double weight = 1.0;
    for (int j = 0; t + j < n; ++j) {
      const int u = t + j;
      const double bootstrap = in.terminal[u] ? 0.0 : in.next_values[u];
      const double delta =
          in.rewards[u] + cfg.gamma * bootstrap - in.values[u];
      adv[t] += weight * delta;
      if (in.terminal[u] || in.truncated[u]) break;
      weight *= cfg.gamma * cfg.lambda;
      if (correct && t + j + 1 < n) weight *= c[t + j + 1];
    }
  }
  return adv;
}

}  // namespace

TEST_CASE("gae with lambda 0 returns one-step residuals") {
  Rng rng(41);
  const EstimationInput in = random_batch(rng, 16, false);
  EstimatorConfig cfg;
  cfg.gamma = 0.9;
  cfg.lambda = 0.0;
  const AdvantageBatch out = gae(in, cfg);
  for (int t = 0; t < in.size(); ++t) {
    const double bootstrap = in.terminal[t] ? 0.0 : in.next_values[t];
    const double delta = in.rewards[t] + cfg.gamma * bootstrap - in.values[t];
    CHECK(out.advantage[t] == doctest::Approx(delta).epsilon(1e-15));
    CHECK(out.value_target[t] ==
          doctest::Approx(in.values[t] + delta).epsilon(1e-15));
  }
}

TEST_CASE("gae in the Monte Carlo limit") {
  // lambda = 1, gamma = 1 over a single terminal episode gives
  // A_t = sum_{j >= t} r_j - V(s_t).
  Rng rng(42);
  const int n = 12;
  EstimationInput in;
  in.rewards = rng.normal_vector(n);
  in.values = rng.normal_vector(n);
  in.log_ratio = Eigen::VectorXd::Zero(n);
  in.terminal.assign(n, 0);
  in.truncated.assign(n, 0);
  in.terminal[n - 1] = 1;
  // Consistent bootstrap values: next_values[t] is V at the next state.
  in.next_values.resize(n);
  in.next_values.head(n - 1) = in.values.tail(n - 1);
  in.next_values[n - 1] = 0.0;  // unused at the terminal step

  EstimatorConfig cfg;
  cfg.gamma = 1.0;
  cfg.lambda = 1.0;
  const AdvantageBatch out = gae(in, cfg);
  double tail = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    tail += in.rewards[t];
    CHECK(out.advantage[t] ==
          doctest::Approx(tail - in.values[t]).epsilon(1e-12));
  }
}

TEST_CASE("gae matches the brute-force double loop on fuzzed batches") {
  Rng rng(43);
  EstimatorConfig cfg;
  cfg.gamma = 0.97;
  cfg.lambda = 0.9;
  for (int trial = 0; trial < 50; ++trial) {
    const EstimationInput in = random_batch(rng, 10 + trial % 20, false);
    const AdvantageBatch out = gae(in, cfg);
    const Eigen::VectorXd ref = brute_force_advantage(in, cfg, false);
    CHECK((out.advantage - ref).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("vtrace reductions") {
  Rng rng(44);
  EstimatorConfig cfg;
  cfg.gamma = 0.95;
  cfg.lambda = 0.9;
  cfg.c_bar = 1.0;

  SUBCASE("on-policy batches reproduce gae exactly") {
    for (int trial = 0; trial < 20; ++trial) {
      const EstimationInput in = random_batch(rng, 24, false);
      const AdvantageBatch a = gae(in, cfg);
      const AdvantageBatch b = vtrace_targets(in, cfg);
      CHECK((a.advantage - b.advantage).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((a.value_target - b.value_target).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((a.start_q - b.start_q).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }

  SUBCASE("uniform ratio 2 with c_bar 1 is fully truncated to on-policy") {
    EstimationInput in = random_batch(rng, 24, false);
    EstimationInput doubled = in;
    doubled.log_ratio = Eigen::VectorXd::Constant(24, std::log(2.0));
    const AdvantageBatch a = vtrace_targets(in, cfg);
    const AdvantageBatch b = vtrace_targets(doubled, cfg);
    CHECK((a.advantage - b.advantage).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((a.value_target - b.value_target).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("vtrace recursion equals the explicit weighted sum") {
  Rng rng(45);
  EstimatorConfig cfg;
  cfg.gamma = 0.92;
  cfg.lambda = 0.85;
  cfg.c_bar = 1.0;
  for (int trial = 0; trial < 50; ++trial) {
    const EstimationInput in = random_batch(rng, 10 + trial % 15, true);
    const AdvantageBatch out = vtrace_targets(in, cfg);
    const Eigen::VectorXd ref = brute_force_advantage(in, cfg, true);
    CHECK((out.advantage - ref).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("raising c_bar never shrinks correction products") {
  Rng rng(46);
  const Eigen::VectorXd log_ratio = 0.5 * rng.normal_vector(32);
  const Eigen::VectorXd c_lo = truncated_ratios(log_ratio, 0.7);
  const Eigen::VectorXd c_hi = truncated_ratios(log_ratio, 1.4);
  double prod_lo = 1.0;
  double prod_hi = 1.0;
  for (int t = 0; t < 32; ++t) {
    prod_lo *= c_lo[t];
    prod_hi *= c_hi[t];
    CHECK(prod_hi >= prod_lo - 1e-15);
  }
}

TEST_CASE("starting point standardization") {
  SUBCASE("postconditions on a random minibatch") {
    Rng rng(47);
    const Eigen::VectorXd q = 3.0 * rng.normal_vector(64);
    const StandardizeResult r = standardize_starting_point(q);
    CHECK_FALSE(r.degenerate);
    CHECK(std::abs(r.values.mean()) < 1e-9);
    const double stddev =
        std::sqrt(r.values.squaredNorm() / double(r.values.size()) -
                  r.values.mean() * r.values.mean());
    CHECK(std::abs(stddev - 1.0) < 1e-9);
  }

  SUBCASE("on-policy data standardizes the raw advantages") {
    Rng rng(48);
    EstimationInput in = random_batch(rng, 32, false);
    EstimatorConfig cfg;
    cfg.gamma = 0.9;
    cfg.lambda = 0.95;
    const AdvantageBatch out = gae(in, cfg);
    CHECK(out.start_q == out.advantage);  // ratios are exactly one
    const StandardizeResult a = standardize_starting_point(out.start_q);
    const StandardizeResult b = standardize_starting_point(out.advantage);
    CHECK(a.values == b.values);
  }

  SUBCASE("constant minibatch degenerates to centered zeros") {
    const StandardizeResult r =
        standardize_starting_point(Eigen::VectorXd::Constant(8, 4.2));
    CHECK(r.degenerate);
    CHECK(r.values.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.stddev == 1.0);
  }

  SUBCASE("empty minibatch is rejected") {
    CHECK_THROWS_AS(standardize_starting_point(Eigen::VectorXd()),
                    std::invalid_argument);
  }
}

TEST_CASE("vtrace advantage is unbiased on a tabular MDP with exact values") {
  // Three-state MDP, exact V^{pi_k} for the values, behavior policy different
  // from the current policy with ratios far below c_bar, so no truncation
  // occurs and each correction term has zero mean.
  TabularMdp mdp;
  mdp.num_states = 3;
  mdp.num_actions = 2;
  mdp.transition.resize(6, 3);
  mdp.transition << 0.6, 0.3, 0.1,
                    0.2, 0.5, 0.3,
                    0.3, 0.3, 0.4,
                    0.1, 0.7, 0.2,
                    0.25, 0.25, 0.5,
                    0.4, 0.4, 0.2;
  mdp.reward.resize(3, 2);
  mdp.reward << 0.5, -0.2,
                0.1, 0.8,
               -0.4, 0.3;
  mdp.rho0 = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  mdp.gamma = 0.9;

  TabularPolicy current, behavior;
  current.probs.resize(3, 2);
  current.probs << 0.65, 0.35,
                   0.45, 0.55,
                   0.30, 0.70;
  behavior.probs.resize(3, 2);
  behavior.probs << 0.50, 0.50,
                    0.55, 0.45,
                    0.40, 0.60;

  const OracleReport rep = solve_policy(mdp, current);

  EstimatorConfig cfg;
  cfg.gamma = mdp.gamma;
  cfg.lambda = 0.9;
  cfg.c_bar = 5.0;  // ratios stay below 1.5, so min() never binds

  const int s0 = 0;
  const int a0 = 1;
  const int horizon = 12;
  const int trials = 100000;

  Rng rng(49);
  const auto sample_categorical = [&rng](const Eigen::VectorXd& p) {
    double u = rng.uniform();
    for (int i = 0; i < p.size(); ++i) {
      u -= p[i];
      if (u <= 0.0) return i;
    }
    return static_cast<int>(p.size()) - 1;
  };

  double sum = 0.0;
  double sum_sq = 0.0;
  EstimationInput in;
  in.rewards.resize(horizon);
  in.values.resize(horizon);
  in.next_values.resize(horizon);
  in.log_ratio.resize(horizon);
  in.terminal.assign(horizon, 0);
  in.truncated.assign(horizon, 0);

  for (int trial = 0; trial < trials; ++trial) {
    int s = s0;
    int a = a0;
    for (int t = 0; t < horizon; ++t) {
      in.rewards[t] = mdp.reward(s, a);
      in.values[t] = rep.V[s];
      in.log_ratio[t] =
          std::log(current.probs(s, a)) - std::log(behavior.probs(s, a));
      const int sp = sample_categorical(mdp.transition.row(mdp.row(s, a)));
      in.next_values[t] = rep.V[sp];
      s = sp;
      a = sample_categorical(behavior.probs.row(s));
    }
    const AdvantageBatch out = vtrace_targets(in, cfg);
    sum += out.advantage[0];
    sum_sq += out.advantage[0] * out.advantage[0];
  }

  const double mean = sum / trials;
  const double var = sum_sq / trials - mean * mean;
  const double se = std::sqrt(var / trials);
  REQUIRE(se > 0.0);
  CHECK(std::abs(mean - rep.A(s0, a0)) < 3.0 * se);
}

TEST_CASE("estimator config validation") {
  EstimatorConfig cfg;
  cfg.gamma = 1.0;  // allowed for episodic Monte Carlo limits
  CHECK_NOTHROW(cfg.validate());
  cfg.gamma = 1.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.gamma = 0.99;
  cfg.c_bar = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
