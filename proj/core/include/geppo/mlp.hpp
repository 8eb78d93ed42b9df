#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "json.hpp"

namespace geppo {

class Rng;

struct MlpCache {
  Eigen::MatrixXd input;                 // obs_dim x batch
  std::vector<Eigen::MatrixXd> hidden;   // post-tanh activations per layer
};

/// Fully connected net with tanh hidden layers and an identity output,
/// operating on a flat parameter vector [W0 | b0 | W1 | b1 | ...]. Forward
/// and reverse passes are batched; columns are samples.
class Mlp {
 public:
  explicit Mlp(std::vector<int> sizes);

  int param_count() const { return param_count_; }
  int in_dim() const { return sizes_.front(); }
  int out_dim() const { return sizes_.back(); }
  int layers() const { return static_cast<int>(sizes_.size()) - 1; }

  /// Scaled-uniform fan-in weights, zero biases; deterministic in the rng.
  Eigen::VectorXd init_params(Rng& rng) const;

  Eigen::MatrixXd forward(const Eigen::VectorXd& theta,
                          const Eigen::MatrixXd& X,
                          MlpCache* cache = nullptr) const;
  Eigen::VectorXd forward1(const Eigen::VectorXd& theta,
                           const Eigen::VectorXd& x) const;

  /// Accumulates d(sum of losses)/dtheta for the upstream gradient dY
  /// (out_dim x batch) produced against the cached forward pass.
  Eigen::VectorXd backward(const Eigen::VectorXd& theta, const MlpCache& cache,
                           const Eigen::MatrixXd& dY) const;

  Eigen::Map<const Eigen::MatrixXd> weight(const Eigen::VectorXd& theta,
                                           int layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(const Eigen::VectorXd& theta,
                                         int layer) const;

 private:
  std::vector<int> sizes_;
  std::vector<int> w_offset_, b_offset_;
  int param_count_ = 0;
};

/// Diagonal Gaussian policy: MLP mean, state-independent log standard
/// deviation stored in the tail of the parameter vector and clamped to
/// [-20, 2] after every update.
class GaussianPolicy {
 public:
  static constexpr double kLogStdMin = -20.0;
  static constexpr double kLogStdMax = 2.0;

  GaussianPolicy(int obs_dim, const std::vector<int>& hidden, int act_dim);

  int param_count() const { return mean_net_.param_count() + act_dim_; }
  int act_dim() const { return act_dim_; }
  int obs_dim() const { return mean_net_.in_dim(); }
  const Mlp& mean_net() const { return mean_net_; }

  /// Initial log-std is log(std_multiple * half action range) per dimension.
  Eigen::VectorXd init_params(Rng& rng, const Eigen::VectorXd& action_low,
                              const Eigen::VectorXd& action_high,
                              double std_multiple) const;

  Eigen::VectorXd log_std(const Eigen::VectorXd& theta) const {
    return theta.tail(act_dim_);
  }
  void clamp_log_std(Eigen::VectorXd& theta) const;

  double logprob(const Eigen::VectorXd& theta, const Eigen::VectorXd& obs,
                 const Eigen::VectorXd& action) const;
  Eigen::VectorXd logprob_batch(const Eigen::VectorXd& theta,
                                const Eigen::MatrixXd& obs,
                                const Eigen::MatrixXd& actions) const;

  /// Gradient of the log-density with respect to all parameters.
  Eigen::VectorXd logprob_grad(const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& obs,
                               const Eigen::VectorXd& action) const;

  /// Gradient of sum_s coeff[s] * logprob_s in one batched reverse pass.
  Eigen::VectorXd weighted_logprob_grad(const Eigen::VectorXd& theta,
                                        const Eigen::MatrixXd& obs,
                                        const Eigen::MatrixXd& actions,
                                        const Eigen::VectorXd& coeff) const;

  Eigen::VectorXd mean_action(const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& obs) const;
  Eigen::VectorXd sample(const Eigen::VectorXd& theta,
                         const Eigen::VectorXd& obs, Rng& rng) const;

 private:
  Mlp mean_net_;
  int act_dim_;
};

/// Scalar state-value approximator.
class ValueFunction {
 public:
  ValueFunction(int obs_dim, const std::vector<int>& hidden);

  int param_count() const { return net_.param_count(); }
  const Mlp& net() const { return net_; }

  Eigen::VectorXd init_params(Rng& rng) const { return net_.init_params(rng); }

  double forward(const Eigen::VectorXd& theta,
                 const Eigen::VectorXd& obs) const;
  Eigen::VectorXd forward_batch(const Eigen::VectorXd& theta,
                                const Eigen::MatrixXd& obs) const;

  Eigen::VectorXd grad(const Eigen::VectorXd& theta,
                       const Eigen::VectorXd& obs) const;
  Eigen::VectorXd weighted_grad(const Eigen::VectorXd& theta,
                                const Eigen::MatrixXd& obs,
                                const Eigen::VectorXd& coeff) const;

 private:
  Mlp net_;
};

/// Checkpoint encoding: one tensor per layer with an explicit shape header.
nlohmann::json mlp_params_to_json(const Mlp& net, const Eigen::VectorXd& theta);
Eigen::VectorXd mlp_params_from_json(const Mlp& net, const nlohmann::json& j);

/// Bias-corrected Adam in the minimizing convention.
struct AdamState {
  AdamState(int n, double learning_rate);

  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;

  /// Throws std::invalid_argument on shape mismatch or non-finite gradient.
  void apply(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
};

}  // namespace geppo
