#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace geppo {

struct EstimatorConfig {
  double gamma = 0.995;
  double lambda = 0.97;
  double c_bar = 1.0;  // V-trace truncation parameter

  void validate() const;
};

/// Per-transition inputs for advantage estimation. `log_ratio` holds
/// log pi_k(a|s) - log behavior(a|s); zero for on-policy data. Value
/// bootstrapping uses `next_values`, suppressed at terminal transitions but
/// not at time-limit truncations.
struct EstimationInput {
  Eigen::VectorXd rewards;
  Eigen::VectorXd values;
  Eigen::VectorXd next_values;
  Eigen::VectorXd log_ratio;
  std::vector<std::uint8_t> terminal;
  std::vector<std::uint8_t> truncated;

  int size() const { return static_cast<int>(rewards.size()); }
  void validate() const;
};

struct AdvantageBatch {
  Eigen::VectorXd advantage;
  Eigen::VectorXd value_target;
  /// Starting point of the policy update: (pi_k / behavior) * advantage,
  /// with the untruncated ratio.
  Eigen::VectorXd start_q;
};

/// Lambda-weighted TD-residual recursion
///   A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1},
/// value target A_t + V(s_t). Ignores log_ratio except for start_q.
AdvantageBatch gae(const EstimationInput& input, const EstimatorConfig& config);

/// Off-policy variant: the lambda-weighted average over K-step advantage
/// estimates corrected by truncated importance ratios, computed by the
/// equivalent backward recursion
///   A_t = delta_t + gamma * lambda * (1 - done_t) * c_{t+1} * A_{t+1},
/// with c_t = min(c_bar, ratio_t). Value target V(s_t) + c_t * A_t. With all
/// ratios equal to one this reproduces gae() exactly. Correction products
/// reset at episode ends.
AdvantageBatch vtrace_targets(const EstimationInput& input,
                              const EstimatorConfig& config);

/// Per-step truncated ratios min(c_bar, exp(log_ratio)).
Eigen::VectorXd truncated_ratios(const Eigen::VectorXd& log_ratio,
                                 double c_bar);

struct StandardizeResult {
  Eigen::VectorXd values;
  double mean = 0.0;
  double stddev = 1.0;
  bool degenerate = false;
};

/// Population-standardizes the update starting points within a minibatch.
/// A zero-variance minibatch comes back centered with unit divisor and the
/// degenerate flag set.
StandardizeResult standardize_starting_point(const Eigen::VectorXd& q);

}  // namespace geppo
