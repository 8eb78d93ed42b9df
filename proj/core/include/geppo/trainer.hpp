#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "geppo/buffer.hpp"
#include "geppo/env.hpp"
#include "geppo/estimation.hpp"
#include "geppo/mlp.hpp"
#include "geppo/objective.hpp"
#include "geppo/weights.hpp"
#include "json.hpp"

namespace geppo {

enum class Algorithm { ppo, geppo, ppo_adapt };
Algorithm algorithm_from_string(const std::string& s);
std::string to_string(Algorithm a);

enum class TvMode { post_update, minibatch_avg };

/// All hyperparameters of a run. Defaults follow the reference experimental
/// settings: gamma 0.995, lambda 0.97, 32 minibatches x 10 epochs, Adam with
/// 3e-4 for both networks, eps 0.2 for PPO, batch sizes N = 2048 / n = 1024,
/// adaptive factor 0.03 with threshold factor 0.5, c_bar 1.
struct TrainerConfig {
  Algorithm algorithm = Algorithm::geppo;
  EnvName env = EnvName::point_mass;
  std::uint64_t seed = 0;
  std::int64_t total_steps = 1000000;
  int n = 1024;
  int N = 2048;
  int M_bar = 10;
  double eps_ppo = 0.2;
  double gamma = 0.995;
  double lambda = 0.97;
  double c_bar = 1.0;
  double alpha = 0.03;
  double beta = 0.5;
  double eta0 = 3e-4;
  double value_lr = 3e-4;
  int minibatches = 32;
  int epochs = 10;
  WeightProgram weight_program = WeightProgram::essopt;
  std::vector<int> hidden = {64, 64};
  double init_std_multiple = 1.0;
  int eval_episodes = 10;
  TvMode tv_mode = TvMode::post_update;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainerConfig from_json(const nlohmann::json& j);

  /// Derived quantities fixed for the whole run. Resolution is pure: the
  /// same config document always produces the same triple (M, nu, epsilon).
  struct Resolved {
    int B = 1;
    PolicyWeights weights;
    double epsilon = 0.2;
    int batch_per_iter = 0;
    int window_capacity = 1;
    bool generalized = false;
    bool adaptive_lr = false;
    bool vtrace = false;
  };
  Resolved resolve() const;
};

struct UpdateReport {
  int iter = 0;
  std::int64_t steps = 0;
  double eval_return = 0.0;
  double tv_hat = 0.0;
  double eta = 0.0;  // learning rate after the controller step
  double clip_frac = 0.0;
  double loss = 0.0;

  nlohmann::json to_json() const;
  static UpdateReport from_json(const nlohmann::json& j);
};

struct TrainResult {
  std::vector<UpdateReport> reports;
  bool diverged = false;
  int diverged_iter = -1;
  Eigen::VectorXd policy_params;
  Eigen::VectorXd value_params;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Single-threaded, deterministic training loop: collect a batch with the
/// current policy, push it into the replay window, maximize the clipped
/// objective with minibatch Adam, regress the value function to its targets,
/// estimate the total variation distance moved and adapt the learning rate.
class Trainer {
 public:
  explicit Trainer(TrainerConfig config);

  /// Runs until total_steps is reached; one JSONL record per iteration is
  /// written to `metrics` when provided. Throws nothing: divergence aborts
  /// are recorded in the result.
  TrainResult run(std::ostream* metrics = nullptr);

  const TrainerConfig& config() const { return config_; }
  const TrainerConfig::Resolved& resolved() const { return resolved_; }
  const Eigen::VectorXd& policy_params() const { return policy_params_; }
  const Eigen::VectorXd& value_params() const { return value_params_; }
  const GaussianPolicy& policy() const { return policy_; }
  const RunningNormalizer& normalizer() const { return normalizer_; }

  /// Mean return of eval_episodes deterministic-mean-action episodes under
  /// frozen normalizer statistics.
  double evaluate(std::uint64_t stream_index) const;

  /// Version-tagged parameter checkpoint.
  nlohmann::json checkpoint() const;
  void restore(const nlohmann::json& checkpoint);

 private:
  UpdateReport iterate();

  TrainerConfig config_;
  TrainerConfig::Resolved resolved_;
  EstimatorConfig estimator_;
  std::unique_ptr<Env> env_;
  GaussianPolicy policy_;
  ValueFunction value_;
  Eigen::VectorXd policy_params_;
  Eigen::VectorXd value_params_;
  RunningNormalizer normalizer_;
  AdamState policy_adam_;
  AdamState value_adam_;
  LrController lr_;
  ReplayWindow window_;
  std::int64_t steps_done_ = 0;
  int iter_ = 0;
};

}  // namespace geppo
