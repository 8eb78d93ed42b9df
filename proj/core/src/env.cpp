#include "geppo/env.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "geppo/rng.hpp"

namespace geppo {

EnvName env_from_string(const std::string& s) {
  if (s == "point_mass") return EnvName::point_mass;
  if (s == "pendulum") return EnvName::pendulum;
  throw std::invalid_argument("unknown environment: " + s);
}

std::string to_string(EnvName name) {
  switch (name) {
    case EnvName::point_mass: return "point_mass";
    case EnvName::pendulum: return "pendulum";
  }
  throw std::logic_error("unreachable");
}

namespace {

void check_action(const Eigen::VectorXd& action, int act_dim) {
  if (action.size() != act_dim) {
    throw std::invalid_argument("action has wrong dimension");
  }
  if (!action.allFinite()) {
    throw std::invalid_argument("action must be finite");
  }
}

double wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi_v<double>;
  return theta - two_pi * std::round(theta / two_pi);
}

/// 2-D double integrator steered towards the origin. Velocity gains
/// 0.1 * clip(a, -1, 1) per step, position advances by 0.1 * velocity and is
/// confined to [-2, 2]^2, which bounds the per-step reward by -(2 sqrt 2 + 0.02).
class PointMassEnv final : public Env {
 public:
  PointMassEnv() {
    spec_.name = EnvName::point_mass;
    spec_.obs_dim = 4;
    spec_.act_dim = 2;
    spec_.max_episode_steps = 100;
    spec_.action_low = Eigen::VectorXd::Constant(2, -1.0);
    spec_.action_high = Eigen::VectorXd::Constant(2, 1.0);
  }

  const EnvSpec& spec() const override { return spec_; }

  Eigen::VectorXd reset(Rng& rng) override {
    pos_ << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
    vel_.setZero();
    steps_ = 0;
    started_ = true;
    return observation();
  }

  StepResult step(const Eigen::VectorXd& action) override {
    check_action(action, spec_.act_dim);
    const Eigen::Vector2d a = action.cwiseMax(-1.0).cwiseMin(1.0);
    vel_ += 0.1 * a;
    pos_ += 0.1 * vel_;
    pos_ = pos_.cwiseMax(-2.0).cwiseMin(2.0);
    ++steps_;

    StepResult result;
    result.reward = -pos_.norm() - 0.01 * a.squaredNorm();
    result.next_obs = observation();
    result.truncated = steps_ >= spec_.max_episode_steps;
    return result;
  }

  Eigen::VectorXd observation() const override {
    Eigen::VectorXd obs(4);
    obs << pos_[0], pos_[1], vel_[0], vel_[1];
    return obs;
  }

  bool needs_reset() const override {
    return !started_ || steps_ >= spec_.max_episode_steps;
  }

  void set_state(const Eigen::VectorXd& obs) override {
    pos_ << obs[0], obs[1];
    vel_ << obs[2], obs[3];
    started_ = true;
  }

 private:
  EnvSpec spec_;
  Eigen::Vector2d pos_ = Eigen::Vector2d::Zero();
  Eigen::Vector2d vel_ = Eigen::Vector2d::Zero();
  int steps_ = 0;
  bool started_ = false;
};

/// Torque-limited pendulum stabilized at the upright position theta = 0,
/// integrated semi-implicitly with dt = 0.05 and g/l = 10.
class PendulumEnv final : public Env {
 public:
  PendulumEnv() {
    spec_.name = EnvName::pendulum;
    spec_.obs_dim = 2;
    spec_.act_dim = 1;
    spec_.max_episode_steps = 200;
    spec_.action_low = Eigen::VectorXd::Constant(1, -2.0);
    spec_.action_high = Eigen::VectorXd::Constant(1, 2.0);
  }

  const EnvSpec& spec() const override { return spec_; }

  Eigen::VectorXd reset(Rng& rng) override {
    theta_ = rng.uniform(-std::numbers::pi_v<double>, std::numbers::pi_v<double>);
    theta_dot_ = rng.uniform(-1.0, 1.0);
    steps_ = 0;
    started_ = true;
    return observation();
  }

  StepResult step(const Eigen::VectorXd& action) override {
    check_action(action, spec_.act_dim);
    const double u = std::clamp(action[0], -2.0, 2.0);
    theta_dot_ += 0.05 * (-10.0 * std::sin(theta_) + u);
    theta_ = wrap_angle(theta_ + 0.05 * theta_dot_);
    ++steps_;

    StepResult result;
    result.reward =
        -(theta_ * theta_ + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u);
    result.next_obs = observation();
    result.truncated = steps_ >= spec_.max_episode_steps;
    return result;
  }

  Eigen::VectorXd observation() const override {
    Eigen::VectorXd obs(2);
    obs << theta_, theta_dot_;
    return obs;
  }

  bool needs_reset() const override {
    return !started_ || steps_ >= spec_.max_episode_steps;
  }

  void set_state(const Eigen::VectorXd& obs) override {
    theta_ = obs[0];
    theta_dot_ = obs[1];
    started_ = true;
  }

 private:
  EnvSpec spec_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  int steps_ = 0;
  bool started_ = false;
};

}  // namespace

std::unique_ptr<Env> make_env(EnvName name) {
  switch (name) {
    case EnvName::point_mass: return std::make_unique<PointMassEnv>();
    case EnvName::pendulum: return std::make_unique<PendulumEnv>();
  }
  throw std::logic_error("unreachable");
}

TrajectoryBatch rollout(const Agent& agent, Env& env, int n_steps, Rng& rng) {
  if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
  TrajectoryBatch batch;
  batch.reserve(n_steps);
  if (env.needs_reset()) env.reset(rng);
  Eigen::VectorXd obs = env.observation();
  for (int t = 0; t < n_steps; ++t) {
    AgentAction act = agent(obs, rng);
    const StepResult sr = env.step(act.action);

    Transition tr;
    tr.state = obs;
    tr.action = std::move(act.action);
    tr.next_state = sr.next_obs;
    tr.reward = sr.reward;
    tr.terminal = sr.terminal;
    tr.truncated = sr.truncated;
    tr.behavior_logprob = act.logprob;
    batch.push_back(std::move(tr));

    obs = (sr.terminal || sr.truncated) ? env.reset(rng) : sr.next_obs;
  }
  return batch;
}

void dump_trajectory_jsonl(const TrajectoryBatch& batch, std::ostream& out) {
  for (const Transition& tr : batch) {
    nlohmann::json j{
        {"state", std::vector<double>(tr.state.begin(), tr.state.end())},
        {"action", std::vector<double>(tr.action.begin(), tr.action.end())},
        {"next_state",
         std::vector<double>(tr.next_state.begin(), tr.next_state.end())},
        {"reward", tr.reward},
        {"terminal", tr.terminal},
        {"truncated", tr.truncated},
        {"behavior_logprob", tr.behavior_logprob},
        {"policy_age", tr.policy_age},
    };
    out << j.dump() << '\n';
  }
}

RunningNormalizer::RunningNormalizer(int dim)
    : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)) {}

void RunningNormalizer::update(const Eigen::VectorXd& obs) {
  if (obs.size() != mean_.size()) {
    throw std::invalid_argument("observation dimension mismatch");
  }
  ++count_;
  const Eigen::VectorXd delta = obs - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta.cwiseProduct(obs - mean_);
}

Eigen::VectorXd RunningNormalizer::variance() const {
  if (count_ == 0) return Eigen::VectorXd::Zero(mean_.size());
  return m2_ / static_cast<double>(count_);
}

Eigen::VectorXd RunningNormalizer::transform(const Eigen::VectorXd& obs) const {
  if (count_ == 0) return obs;
  const Eigen::VectorXd stddev =
      variance().cwiseSqrt().cwiseMax(1e-8);
  return (obs - mean_).cwiseQuotient(stddev);
}

Eigen::MatrixXd RunningNormalizer::transform(const Eigen::MatrixXd& obs_cols) const {
  if (count_ == 0) return obs_cols;
  const Eigen::VectorXd stddev = variance().cwiseSqrt().cwiseMax(1e-8);
  return (obs_cols.colwise() - mean_).array().colwise() /
         stddev.array();
}

Eigen::VectorXd RunningNormalizer::observe(const Eigen::VectorXd& obs) {
  update(obs);
  return transform(obs);
}

nlohmann::json RunningNormalizer::to_json() const {
  return {{"count", count_},
          {"mean", std::vector<double>(mean_.begin(), mean_.end())},
          {"m2", std::vector<double>(m2_.begin(), m2_.end())}};
}

RunningNormalizer RunningNormalizer::from_json(const nlohmann::json& j) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto m2 = j.at("m2").get<std::vector<double>>();
  RunningNormalizer n(static_cast<int>(mean.size()));
  n.count_ = j.at("count").get<std::int64_t>();
  n.mean_ = Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size());
  n.m2_ = Eigen::Map<const Eigen::VectorXd>(m2.data(), m2.size());
  return n;
}

}  // namespace geppo
