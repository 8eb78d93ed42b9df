#pragma once

#include <Eigen/Dense>

#include "json.hpp"

namespace geppo {

class Rng;

/// Finite discounted MDP with a dense transition tensor. The transition matrix
/// stores P(s' | s, a) in row s * num_actions + a.
struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  Eigen::MatrixXd transition;  // (S*A) x S
  Eigen::MatrixXd reward;      // S x A
  Eigen::VectorXd rho0;        // S
  double gamma = 0.0;

  int row(int s, int a) const { return s * num_actions + a; }

  /// Checks stochasticity of every transition row and rho0 to 1e-12 and the
  /// discount range; throws std::invalid_argument on violation.
  void validate() const;

  nlohmann::json to_json() const;
  static TabularMdp from_json(const nlohmann::json& j);
};

struct TabularPolicy {
  Eigen::MatrixXd probs;  // S x A, rows sum to 1

  void validate() const;
};

/// Exact quantities of a policy: return, value functions, advantage and the
/// normalized discounted state visitation distribution.
struct OracleReport {
  double J = 0.0;
  Eigen::VectorXd V;
  Eigen::MatrixXd Q;  // S x A
  Eigen::MatrixXd A;  // S x A
  Eigen::VectorXd d_pi;
};

/// Solves the Bellman linear system V = r_pi + gamma * P_pi V and the
/// visitation system d = (1-gamma) rho0' (I - gamma P_pi)^{-1} by direct
/// dense factorization. Residuals are checked to 1e-9 post hoc.
OracleReport solve_policy(const TabularMdp& mdp, const TabularPolicy& pi);

/// E_{s~d}[TV(pi_a, pi_b)(s)] with TV(s) = 0.5 * sum_a |pi_a(a|s) - pi_b(a|s)|.
double tv_state(const TabularPolicy& pi_a, const TabularPolicy& pi_b,
                const Eigen::VectorXd& d);

/// max_s |E_{a~pi}[A^{pi_k}(s, a)]|.
double penalty_constant(const TabularMdp& mdp, const TabularPolicy& pi,
                        const TabularPolicy& pi_k);

/// Same as penalty_constant but over a precomputed advantage table.
double penalty_constant_from(const Eigen::MatrixXd& advantage_k,
                             const TabularPolicy& pi);

/// State-transition matrix P_pi(s, s') = sum_a pi(a|s) P(s'|s, a).
Eigen::MatrixXd policy_transition(const TabularMdp& mdp,
                                  const TabularPolicy& pi);

/// Fuzzing helpers: rows are normalized positive uniforms, so policies are
/// strictly positive and support containment holds by construction.
TabularMdp random_mdp(Rng& rng, int max_states = 6, int max_actions = 4,
                      double gamma_lo = 0.5, double gamma_hi = 0.9);
TabularPolicy random_policy(Rng& rng, int num_states, int num_actions);

}  // namespace geppo
