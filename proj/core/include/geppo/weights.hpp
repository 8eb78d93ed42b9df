#pragma once

#include <Eigen/Dense>

#include <string>

#include "json.hpp"

namespace geppo {

/// Distribution nu over the last M policies, trailing zero weights trimmed so
/// M is the effective number of prior policies.
struct PolicyWeights {
  Eigen::VectorXd nu;
  int M = 0;

  double expected_age_plus_one() const;  // sum_i nu_i (i+1), in [1, M]
  double sum_sq() const;                 // sum_i nu_i^2
  void validate() const;
  nlohmann::json to_json() const;
};

enum class WeightProgram { essopt, tvopt, uniform };
WeightProgram weight_program_from_string(const std::string& s);
std::string to_string(WeightProgram p);

/// ESS = n / sum_i nu_i^2; n uniformly weighted samples per policy.
double effective_sample_size(const PolicyWeights& w, int n);

/// eps_geppo = eps_ppo / E_{i~nu}[i+1], matching worst-case expected
/// performance loss per update between the two algorithms.
double epsilon_mapping(const PolicyWeights& w, double eps_ppo);

/// Uniform-weight factors: with M = B the total variation change throughout
/// training grows by 2B/(B+1); with M = 2B-1 the per-update sample size grows
/// by (2B-1)/B.
double tv_factor_uniform(int B);
double ess_factor_uniform(int B);

PolicyWeights uniform_weights(int M);

/// minimize sum nu_i (i+1)  s.t.  sum nu_i^2 <= 1/B, nu on the simplex.
/// Maximizes the change in total variation distance at fixed effective
/// sample size. Requires M_bar >= B.
PolicyWeights solve_tvopt(int B, int M_bar);

/// minimize sum nu_i^2  s.t.  sum nu_i (i+1) = B, nu on the simplex.
/// Maximizes the effective sample size at fixed total variation change.
/// Requires M_bar >= 2B-1.
PolicyWeights solve_essopt(int B, int M_bar);

struct GridResult {
  Eigen::VectorXd nu;
  double objective = 0.0;
  bool feasible_found = false;
};

/// Exhaustive search over the simplex discretized at `step`. Feasibility and
/// objective comparisons are done in integer arithmetic, so the result is the
/// exact optimum of the discretized program. Enforces step <= 1e-2 and
/// M_bar <= 5 to bound the enumeration.
GridResult grid_oracle(WeightProgram program, int B, int M_bar, double step);

}  // namespace geppo
