#include "geppo/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace geppo {

void ClipConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw std::invalid_argument("clipping parameter must lie in (0, 1)");
  }
}

LossSample ppo_loss(double ratio, double advantage, const ClipConfig& clip) {
  const double clipped_ratio =
      std::min(std::max(ratio, 1.0 - clip.epsilon), 1.0 + clip.epsilon);
  const double unclipped = ratio * advantage;
  const double clipped = clipped_ratio * advantage;

  LossSample out;
  out.value = std::min(unclipped, clipped);
  out.clipped = std::abs(ratio - 1.0) > clip.epsilon;
  const bool gradient_flows = unclipped <= clipped || !out.clipped;
  out.grad_coeff = gradient_flows ? unclipped : 0.0;  // d/d logpi of r*A is r*A
  return out;
}

double generalized_clip(double ratio_pi, double ratio_pik, double epsilon) {
  return std::min(std::max(ratio_pi, ratio_pik - epsilon),
                  ratio_pik + epsilon);
}

LossSample geppo_sample_loss(double lp, double lp_k, double lp_b,
                             double q_std, const ClipConfig& clip) {
  const double r = std::exp(lp - lp_b);      // pi / behavior
  const double c = std::exp(lp_k - lp_b);    // pi_k / behavior, range center
  const double unclipped = (r / c) * q_std;
  const double clipped = (generalized_clip(r, c, clip.epsilon) / c) * q_std;

  LossSample out;
  out.value = std::min(unclipped, clipped);
  out.clipped = std::abs(r - c) > clip.epsilon;
  const bool gradient_flows = unclipped <= clipped || !out.clipped;
  out.grad_coeff = gradient_flows ? unclipped : 0.0;
  return out;
}

MinibatchLoss geppo_minibatch_loss(const Eigen::VectorXd& logp,
                                   const Eigen::VectorXd& logp_current,
                                   const Eigen::VectorXd& behavior_logprob,
                                   const Eigen::VectorXd& q_std,
                                   const Eigen::VectorXd& weight,
                                   const ClipConfig& clip, bool generalized) {
  clip.validate();
  const auto m = logp.size();
  if (logp_current.size() != m || behavior_logprob.size() != m ||
      q_std.size() != m || weight.size() != m || m == 0) {
    throw std::invalid_argument("minibatch length mismatch");
  }

  MinibatchLoss out;
  out.dlogp.resize(m);
  int clipped_count = 0;
  double total = 0.0;
  for (Eigen::Index s = 0; s < m; ++s) {
    const double center_log = logp_current[s] - behavior_logprob[s];
    const double ratio_log = logp[s] - logp_current[s];
    if (!std::isfinite(center_log) || !std::isfinite(ratio_log) ||
        std::abs(center_log) > kCenterLogLimit ||
        std::abs(ratio_log) > kRatioLogLimit) {
      ++out.rejected;
      out.dlogp[s] = 0.0;
      continue;
    }
    LossSample sample;
    if (generalized) {
      sample = geppo_sample_loss(logp[s], logp_current[s],
                                 behavior_logprob[s], q_std[s], clip);
    } else {
      sample = ppo_loss(std::exp(logp[s] - behavior_logprob[s]), q_std[s],
                        clip);
    }
    if (!std::isfinite(sample.value)) {
      ++out.rejected;
      out.dlogp[s] = 0.0;
      continue;
    }
    total += weight[s] * sample.value;
    out.dlogp[s] = weight[s] * sample.grad_coeff / static_cast<double>(m);
    if (sample.clipped) ++clipped_count;
  }
  out.value = total / static_cast<double>(m);
  out.clip_fraction = static_cast<double>(clipped_count) / static_cast<double>(m);
  return out;
}

double tv_estimate(const Eigen::VectorXd& logp_candidate,
                   const Eigen::VectorXd& logp_current,
                   const Eigen::VectorXd& behavior_logprob,
                   const Eigen::VectorXd& weight) {
  const auto m = logp_candidate.size();
  if (logp_current.size() != m || behavior_logprob.size() != m ||
      weight.size() != m || m == 0) {
    throw std::invalid_argument("tv_estimate length mismatch");
  }
  double numer = 0.0;
  double denom = 0.0;
  for (Eigen::Index s = 0; s < m; ++s) {
    const double r = std::exp(logp_candidate[s] - behavior_logprob[s]);
    const double c = std::exp(logp_current[s] - behavior_logprob[s]);
    numer += weight[s] * std::abs(r - c);
    denom += weight[s];
  }
  return 0.5 * numer / denom;
}

void LrController::validate() const {
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be nonnegative");
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw std::invalid_argument("beta must lie in [0, 1]");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
}

nlohmann::json LrController::to_json() const {
  return {{"eta", eta}, {"alpha", alpha}, {"beta", beta}, {"epsilon", epsilon}};
}

LrAction lr_update(LrController& ctrl, double tv_hat) {
  ctrl.validate();
  if (!(tv_hat >= 0.0)) throw std::invalid_argument("tv_hat must be >= 0");
  if (tv_hat > ctrl.target()) {
    ctrl.eta /= 1.0 + ctrl.alpha;
    return LrAction::shrink;
  }
  if (tv_hat < ctrl.beta * ctrl.target()) {
    ctrl.eta *= 1.0 + ctrl.alpha;
    return LrAction::grow;
  }
  return LrAction::hold;
}

}  // namespace geppo
