#pragma once

#include <Eigen/Core>

#include "json.hpp"

namespace geppo {

struct ClipConfig {
  double epsilon = 0.2;

  void validate() const;
};

/// Per-sample clipped-surrogate value together with the coefficient of
/// d(objective)/d(log pi); the coefficient is zero when the clip saturates
/// on the smaller branch.
struct LossSample {
  double value = 0.0;
  double grad_coeff = 0.0;
  bool clipped = false;  // probability ratio outside the clipping range
};

/// Standard PPO term min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv).
LossSample ppo_loss(double ratio, double advantage, const ClipConfig& clip);

/// clip(ratio_pi, ratio_pik - eps, ratio_pik + eps): the clipping range is
/// centered at the current policy's ratio against the behavior policy.
double generalized_clip(double ratio_pi, double ratio_pik, double epsilon);

/// Per-sample term of the generalized objective, parameterized by log
/// densities: lp is log pi(a|s) for the candidate policy, lp_k for the
/// current policy and lp_b for the behavior policy. q_std is the
/// standardized update starting point. At lp_k == lp_b this reduces exactly
/// to ppo_loss on the standardized advantage.
LossSample geppo_sample_loss(double lp, double lp_k, double lp_b,
                             double q_std, const ClipConfig& clip);

/// Rejection thresholds for degenerate importance ratios. A sample is
/// dropped when the frozen clip center pi_k/behavior leaves
/// exp(+-kCenterLogLimit) -- the stale snapshot has no usable density -- or
/// when the candidate ratio pi/pi_k leaves exp(+-kRatioLogLimit) during the
/// update. Beyond these ranges a sample is light-years outside its clipping
/// range and its coefficient would only poison the optimizer's second
/// moments.
inline constexpr double kCenterLogLimit = 10.0;
inline constexpr double kRatioLogLimit = 5.0;

/// Weighted empirical objective of a minibatch plus the per-sample upstream
/// gradient d(objective)/d(log pi). The mean uses per-sample weights against
/// the uniform base measure 1/count.
struct MinibatchLoss {
  double value = 0.0;
  Eigen::VectorXd dlogp;  // length = minibatch size
  double clip_fraction = 0.0;
  int rejected = 0;  // samples with degenerate ratios, excluded from the loss
};

MinibatchLoss geppo_minibatch_loss(const Eigen::VectorXd& logp,
                                   const Eigen::VectorXd& logp_current,
                                   const Eigen::VectorXd& behavior_logprob,
                                   const Eigen::VectorXd& q_std,
                                   const Eigen::VectorXd& weight,
                                   const ClipConfig& clip, bool generalized);

/// Sample-based estimate of the expected total variation distance between
/// the candidate and current policies:
///   0.5 * weighted mean of |pi/behavior - pi_k/behavior|.
/// The weighted mean normalizes by the weight sum, so enumerated sets with
/// probability weights are supported as well as assembled sample sets.
double tv_estimate(const Eigen::VectorXd& logp_candidate,
                   const Eigen::VectorXd& logp_current,
                   const Eigen::VectorXd& behavior_logprob,
                   const Eigen::VectorXd& weight);

enum class LrAction { shrink, hold, grow };

/// Multiplicative step-size controller driven by the TV estimate: shrink by
/// 1/(1+alpha) above the target eps/2, grow by (1+alpha) below beta*eps/2.
struct LrController {
  double eta = 3e-4;
  double alpha = 0.03;
  double beta = 0.5;
  double epsilon = 0.2;

  double target() const { return epsilon / 2.0; }
  void validate() const;
  nlohmann::json to_json() const;
};

LrAction lr_update(LrController& ctrl, double tv_hat);

}  // namespace geppo
