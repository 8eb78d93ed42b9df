#include "geppo/buffer.hpp"

#include <cmath>

#include "doctest.h"
#include "geppo/rng.hpp"

using namespace geppo;

namespace {

TrajectoryBatch synthetic_batch(Rng& rng, int n, int obs_dim, int act_dim) {
  TrajectoryBatch batch;
  for (int t = 0; t < n; ++t) {
    Transition tr;
    tr.state = rng.normal_vector(obs_dim);
    tr.action = rng.normal_vector(act_dim);
    tr.next_state = rng.normal_vector(obs_dim);
    tr.reward = rng.uniform(-1.0, 1.0);
    tr.terminal = false;
    tr.truncated = (t % 5 == 4);
    tr.behavior_logprob = rng.uniform(-2.0, -0.5);
    batch.push_back(std::move(tr));
  }
  return batch;
}

PolicySnapshot snapshot_for(int iteration, Rng& rng, int obs_dim) {
  PolicySnapshot snap;
  snap.iteration = iteration;
  snap.policy_params = rng.normal_vector(7);
  RunningNormalizer norm(obs_dim);
  for (int i = 0; i < 5; ++i) norm.update(rng.normal_vector(obs_dim));
  snap.normalizer = norm;
  return snap;
}

// Deterministic stand-ins for the current policy and value function.
BatchLogProb fake_logprob() {
  return [](const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) {
    return Eigen::VectorXd(-0.5 * (states.colwise().norm() +
                                   actions.colwise().norm()).transpose());
  };
}

BatchValue fake_value() {
  return [](const Eigen::MatrixXd& states) {
    return Eigen::VectorXd(states.colwise().sum().transpose());
  };
}

}  // namespace

TEST_CASE("replay window push semantics") {
  Rng rng(61);
  ReplayWindow window(3, 10);

  SUBCASE("first push yields length one with age zero") {
    window.push(snapshot_for(0, rng, 2), synthetic_batch(rng, 10, 2, 1));
    CHECK(window.size() == 1);
    for (const Transition& tr : window.batch(0)) CHECK(tr.policy_age == 0);
  }

  SUBCASE("overflowing the capacity evicts the oldest entry") {
    for (int k = 0; k < 4; ++k) {
      window.push(snapshot_for(k, rng, 2), synthetic_batch(rng, 10, 2, 1));
    }
    CHECK(window.size() == 3);
    CHECK(window.snapshot(0).iteration == 3);
    CHECK(window.snapshot(2).iteration == 1);
  }

  SUBCASE("ages always run 0..min(j, M)-1") {
    for (int j = 1; j <= 5; ++j) {
      window.push(snapshot_for(j, rng, 2), synthetic_batch(rng, 10, 2, 1));
      for (int age = 0; age < window.size(); ++age) {
        for (const Transition& tr : window.batch(age)) {
          CHECK(tr.policy_age == age);
        }
      }
      CHECK(window.size() == std::min(j, 3));
    }
  }

  SUBCASE("wrong batch size is rejected") {
    CHECK_THROWS_AS(
        window.push(snapshot_for(0, rng, 2), synthetic_batch(rng, 9, 2, 1)),
        std::invalid_argument);
  }
}

TEST_CASE("assemble weights") {
  Rng rng(62);
  EstimatorConfig cfg;
  cfg.gamma = 0.9;
  cfg.lambda = 0.9;

  SUBCASE("single entry with nu = [1] gives unit weights") {
    ReplayWindow window(1, 12);
    window.push(snapshot_for(0, rng, 3), synthetic_batch(rng, 12, 3, 2));
    const AssembledSet set = assemble(window, Eigen::VectorXd::Ones(1),
                                      fake_logprob(), fake_value(), cfg, true);
    CHECK(set.count() == 12);
    CHECK((set.weight.array() == 1.0).all());
  }

  SUBCASE("uniform nu over two entries gives unit weights") {
    ReplayWindow window(2, 8);
    for (int k = 0; k < 2; ++k) {
      window.push(snapshot_for(k, rng, 3), synthetic_batch(rng, 8, 3, 2));
    }
    const AssembledSet set =
        assemble(window, Eigen::VectorXd::Constant(2, 0.5), fake_logprob(),
                 fake_value(), cfg, true);
    CHECK((set.weight.array() == 1.0).all());
  }

  SUBCASE("table weights nu_i * M by age") {
    ReplayWindow window(4, 6);
    for (int k = 0; k < 4; ++k) {
      window.push(snapshot_for(k, rng, 3), synthetic_batch(rng, 6, 3, 2));
    }
    Eigen::VectorXd nu(4);
    nu << 0.4, 0.3, 0.2, 0.1;
    const AssembledSet set =
        assemble(window, nu, fake_logprob(), fake_value(), cfg, true);
    const double expected[] = {1.6, 1.2, 0.8, 0.4};
    for (int i = 0; i < set.count(); ++i) {
      CHECK(set.weight[i] == doctest::Approx(expected[set.age[i]]).epsilon(1e-12));
    }
    // Normalized weighted base measure sums to one.
    CHECK(set.weight.sum() / set.count() == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("warmup truncates and renormalizes nu") {
    ReplayWindow window(4, 6);
    for (int k = 0; k < 2; ++k) {
      window.push(snapshot_for(k, rng, 3), synthetic_batch(rng, 6, 3, 2));
    }
    Eigen::VectorXd nu(4);
    nu << 0.4, 0.3, 0.2, 0.1;
    const AssembledSet set =
        assemble(window, nu, fake_logprob(), fake_value(), cfg, true);
    // Truncated to [0.4, 0.3] -> renormalized to [4/7, 3/7], times M = 2.
    for (int i = 0; i < set.count(); ++i) {
      const double expected = set.age[i] == 0 ? 8.0 / 7.0 : 6.0 / 7.0;
      CHECK(set.weight[i] == doctest::Approx(expected).epsilon(1e-12));
    }
  }

  SUBCASE("empty window is rejected") {
    ReplayWindow window(2, 4);
    CHECK_THROWS_AS(assemble(window, Eigen::VectorXd::Ones(1), fake_logprob(),
                             fake_value(), cfg, true),
                    std::invalid_argument);
  }
}

TEST_CASE("weighted expectation consistency") {
  // The assembled weighted mean of any per-sample function equals
  // sum_i nu_i * (mean over age-i samples) exactly.
  Rng rng(63);
  EstimatorConfig cfg;
  cfg.gamma = 0.95;
  cfg.lambda = 0.8;
  const int n = 16;
  ReplayWindow window(3, n);
  for (int k = 0; k < 3; ++k) {
    window.push(snapshot_for(k, rng, 2), synthetic_batch(rng, n, 2, 1));
  }
  Eigen::VectorXd nu(3);
  nu << 0.5, 0.3, 0.2;
  const AssembledSet set =
      assemble(window, nu, fake_logprob(), fake_value(), cfg, true);

  const auto f = [](const AssembledSet& s, int i) {
    return s.advantage[i] + 0.7 * s.behavior_logprob[i];
  };
  double weighted = 0.0;
  for (int i = 0; i < set.count(); ++i) weighted += set.weight[i] * f(set, i);
  weighted /= set.count();

  double mixture = 0.0;
  for (int age = 0; age < 3; ++age) {
    double mean = 0.0;
    int count = 0;
    for (int i = 0; i < set.count(); ++i) {
      if (set.age[i] == age) {
        mean += f(set, i);
        ++count;
      }
    }
    mixture += nu[age] * mean / count;
  }
  CHECK(std::abs(weighted - mixture) <= 1e-12);
}

TEST_CASE("snapshots stay immutable under window churn") {
  Rng rng(64);
  ReplayWindow window(2, 6);
  window.push(snapshot_for(0, rng, 2), synthetic_batch(rng, 6, 2, 1));
  const std::uint64_t sum_before = window.snapshot(0).checksum();

  EstimatorConfig cfg;
  window.push(snapshot_for(1, rng, 2), synthetic_batch(rng, 6, 2, 1));
  (void)assemble(window, Eigen::VectorXd::Constant(2, 0.5), fake_logprob(),
                 fake_value(), cfg, true);
  CHECK(window.snapshot(1).checksum() == sum_before);
}

TEST_CASE("assemble recomputes current log-probs and start points") {
  Rng rng(65);
  EstimatorConfig cfg;
  cfg.gamma = 0.9;
  cfg.lambda = 0.7;
  ReplayWindow window(1, 8);
  window.push(snapshot_for(0, rng, 3), synthetic_batch(rng, 8, 3, 2));
  const AssembledSet set = assemble(window, Eigen::VectorXd::Ones(1),
                                    fake_logprob(), fake_value(), cfg, true);
  const Eigen::VectorXd expected_logp =
      fake_logprob()(set.states, set.actions);
  CHECK((set.logp_current - expected_logp).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < set.count(); ++i) {
    const double ratio =
        std::exp(set.logp_current[i] - set.behavior_logprob[i]);
    CHECK(std::isfinite(ratio));
    CHECK(set.start_q[i] ==
          doctest::Approx(ratio * set.advantage[i]).epsilon(1e-12));
  }
}
