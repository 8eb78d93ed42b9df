#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace geppo {

class Rng;

enum class EnvName { point_mass, pendulum };
EnvName env_from_string(const std::string& s);
std::string to_string(EnvName name);

struct EnvSpec {
  EnvName name = EnvName::point_mass;
  int obs_dim = 0;
  int act_dim = 0;
  int max_episode_steps = 0;
  Eigen::VectorXd action_low;
  Eigen::VectorXd action_high;
};

struct StepResult {
  Eigen::VectorXd next_obs;
  double reward = 0.0;
  bool terminal = false;
  bool truncated = false;
};

/// Single-threaded environment state machine. Dynamics are deterministic
/// given (state, action); all randomness enters through reset.
class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual Eigen::VectorXd reset(Rng& rng) = 0;
  virtual StepResult step(const Eigen::VectorXd& action) = 0;
  virtual Eigen::VectorXd observation() const = 0;
  virtual bool needs_reset() const = 0;
  /// Places the environment in the state encoded by `obs` without touching
  /// the episode step counter.
  virtual void set_state(const Eigen::VectorXd& obs) = 0;
};

std::unique_ptr<Env> make_env(EnvName name);

struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  Eigen::VectorXd next_state;
  double reward = 0.0;
  bool terminal = false;
  bool truncated = false;
  double behavior_logprob = 0.0;
  int policy_age = 0;
};

using TrajectoryBatch = std::vector<Transition>;

struct AgentAction {
  Eigen::VectorXd action;
  double logprob = 0.0;
};

/// Acting policy hook; receives the raw observation.
using Agent = std::function<AgentAction(const Eigen::VectorXd&, Rng&)>;

/// Collects exactly n_steps transitions, resetting the environment whenever
/// an episode ends. Identical (agent, env state, rng) yield identical
/// batches.
TrajectoryBatch rollout(const Agent& agent, Env& env, int n_steps, Rng& rng);

/// One transition per line, for debugging.
void dump_trajectory_jsonl(const TrajectoryBatch& batch, std::ostream& out);

/// Online per-dimension mean/variance (Welford). The update order matters;
/// transform with zero observations is the identity.
class RunningNormalizer {
 public:
  RunningNormalizer() : RunningNormalizer(0) {}
  explicit RunningNormalizer(int dim);

  void update(const Eigen::VectorXd& obs);
  Eigen::VectorXd transform(const Eigen::VectorXd& obs) const;
  Eigen::MatrixXd transform(const Eigen::MatrixXd& obs_cols) const;

  /// update + transform: the streaming standardization step.
  Eigen::VectorXd observe(const Eigen::VectorXd& obs);

  std::int64_t count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  Eigen::VectorXd variance() const;

  nlohmann::json to_json() const;
  static RunningNormalizer from_json(const nlohmann::json& j);

 private:
  std::int64_t count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;  // running sum of squared deviations
};

}  // namespace geppo
