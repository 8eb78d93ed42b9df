#include "geppo/estimation.hpp"

#include <cmath>
#include <stdexcept>

namespace geppo {

void EstimatorConfig::validate() const {
  // gamma = 1 is admitted so the episodic Monte Carlo limit is expressible.
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("gamma must lie in [0, 1]");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("lambda must lie in [0, 1]");
  }
  if (!(c_bar > 0.0)) {
    throw std::invalid_argument("c_bar must be positive");
  }
}

void EstimationInput::validate() const {
  const auto n = rewards.size();
  if (n == 0) throw std::invalid_argument("empty batch");
  if (values.size() != n || next_values.size() != n || log_ratio.size() != n ||
      terminal.size() != static_cast<std::size_t>(n) ||
      truncated.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("estimation input length mismatch");
  }
  for (std::size_t t = 0; t < terminal.size(); ++t) {
    if (terminal[t] && truncated[t]) {
      throw std::invalid_argument("transition both terminal and truncated");
    }
  }
}

Eigen::VectorXd truncated_ratios(const Eigen::VectorXd& log_ratio,
                                 double c_bar) {
  Eigen::VectorXd c(log_ratio.size());
  for (Eigen::Index t = 0; t < log_ratio.size(); ++t) {
    const double ratio = std::exp(log_ratio[t]);
    if (!std::isfinite(ratio)) {
      throw std::invalid_argument("non-finite importance ratio");
    }
    c[t] = std::min(c_bar, ratio);
  }
  return c;
}

namespace {

AdvantageBatch run_recursion(const EstimationInput& input,
                             const EstimatorConfig& config, bool correct) {
  input.validate();
  config.validate();
  const int n = input.size();

  Eigen::VectorXd c;
  if (correct) c = truncated_ratios(input.log_ratio, config.c_bar);

  AdvantageBatch out;
  out.advantage.resize(n);
  out.value_target.resize(n);
  out.start_q.resize(n);

  for (int t = n - 1; t >= 0; --t) {
    const double bootstrap = input.terminal[t] ? 0.0 : input.next_values[t];
    const double delta =
        input.rewards[t] + config.gamma * bootstrap - input.values[t];
    const bool done = input.terminal[t] || input.truncated[t];
    double continuation = 0.0;
    if (!done && t + 1 < n) {
      continuation = out.advantage[t + 1];
      if (correct) continuation *= c[t + 1];
    }
    out.advantage[t] = delta + config.gamma * config.lambda * continuation;
    out.value_target[t] =
        input.values[t] + (correct ? c[t] : 1.0) * out.advantage[t];
    out.start_q[t] = std::exp(input.log_ratio[t]) * out.advantage[t];
  }
  return out;
}

}  // namespace

AdvantageBatch gae(const EstimationInput& input, const EstimatorConfig& config) {
  return run_recursion(input, config, /*correct=*/false);
}

AdvantageBatch vtrace_targets(const EstimationInput& input,
                              const EstimatorConfig& config) {
  return run_recursion(input, config, /*correct=*/true);
}

StandardizeResult standardize_starting_point(const Eigen::VectorXd& q) {
  if (q.size() == 0) throw std::invalid_argument("empty minibatch");
  StandardizeResult result;
  result.mean = q.mean();
  const Eigen::VectorXd centered = q.array() - result.mean;
  const double variance = centered.squaredNorm() / static_cast<double>(q.size());
  const double stddev = std::sqrt(variance);
  if (stddev <= 1e-12 * std::max(1.0, std::abs(result.mean))) {
    result.values = centered;
    result.stddev = 1.0;
    result.degenerate = true;
    return result;
  }
  result.values = centered / stddev;
  result.stddev = stddev;
  return result;
}

}  // namespace geppo
