#pragma once

#include <Eigen/Dense>

#include <vector>

#include "geppo/tabular.hpp"
#include "json.hpp"

namespace geppo {

/// Outcome of one certified relation. `slack` is the margin by which the
/// relation holds: lhs - rhs for lower bounds, rhs - lhs for upper bounds and
/// -|lhs - rhs| for equalities, so that `holds == (slack >= -tol)` uniformly.
struct CertResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool holds = false;

  static CertResult geq(double lhs, double rhs, double tol);
  static CertResult leq(double lhs, double rhs, double tol);
  static CertResult eq(double lhs, double rhs, double tol);

  nlohmann::json to_json() const;
};

/// Tolerances used throughout: solved quantities are certified to 1e-9,
/// algebraic identities to 1e-12.
inline constexpr double kBoundTol = 1e-9;
inline constexpr double kIdentityTol = 1e-12;

/// Both sides of the single-policy improvement lower bound
///   J(pi) - J(pi_k) >= surrogate/(1-gamma) - 2 gamma C / (1-gamma)^2 * tv,
/// evaluated exactly by dynamic programming.
CertResult verify_lb_standard(const TabularMdp& mdp, const TabularPolicy& pi_k,
                              const TabularPolicy& pi);

/// The generalized bound over the last M policies mixed by nu.
/// prior_policies[0] is the current policy pi_k.
CertResult verify_lb_generalized(const TabularMdp& mdp,
                                 const std::vector<TabularPolicy>& priors,
                                 const Eigen::VectorXd& nu,
                                 const TabularPolicy& pi);

/// Triangle decomposition of the mixed penalty term:
///   E_nu E_{d_i}[TV(pi, pi_{k-i})] <= E_nu E_{d_i}[TV(pi, pi_k)]
///     + sum_{j=1}^{M-1} sum_{i=j}^{M-1} nu_i E_{d_i}[TV(pi_{k-j+1}, pi_{k-j})].
CertResult verify_triangle_decomposition(const TabularMdp& mdp,
                                         const std::vector<TabularPolicy>& priors,
                                         const Eigen::VectorXd& nu,
                                         const TabularPolicy& pi);

struct AppendixCert {
  CertResult performance_difference;  // equality, 1e-9
  CertResult visitation_tv;           // upper bound, 1e-9
  CertResult reference_bound;         // lower bound, 1e-9

  bool all_hold() const {
    return performance_difference.holds && visitation_tv.holds &&
           reference_bound.holds;
  }
  nlohmann::json to_json() const;
};

/// Certifies (a) the performance-difference equality, (b) the bound on the
/// total variation distance between state visitation distributions, and
/// (c) the lower bound stated against an arbitrary reference policy.
AppendixCert verify_appendix_lemmas(const TabularMdp& mdp,
                                    const TabularPolicy& pi_k,
                                    const TabularPolicy& pi,
                                    const TabularPolicy& pi_ref);

struct TvIdentityCert {
  CertResult current_policy;  // single-policy ratio identity, 1e-12
  CertResult multi_policy;    // nu-mixed ratio identity, 1e-12

  bool all_hold() const { return current_policy.holds && multi_policy.holds; }
  nlohmann::json to_json() const;
};

/// Both ratio-form total variation identities, evaluated as exact sums over
/// all state-action pairs:
///   E_{d_k}[TV(pi, pi_k)] = 0.5 E_{(s,a)~d_k}[|pi/pi_k - 1|]
///   E_nu E_{d_i}[TV(pi, pi_k)] = 0.5 E_nu E_{(s,a)~d_i}[|pi/pi_i - pi_k/pi_i|]
TvIdentityCert verify_tv_ratio_identities(const TabularMdp& mdp,
                                          const std::vector<TabularPolicy>& priors,
                                          const Eigen::VectorXd& nu,
                                          const TabularPolicy& pi);

/// Throws std::invalid_argument if pi puts mass where pi_ref has none.
void check_support(const TabularPolicy& pi, const TabularPolicy& pi_ref);

}  // namespace geppo
