#include "geppo/certify.hpp"

#include <cmath>
#include <stdexcept>

namespace geppo {

CertResult CertResult::geq(double lhs, double rhs, double tol) {
  CertResult r;
  r.lhs = lhs;
  r.rhs = rhs;
  r.slack = lhs - rhs;
  r.holds = r.slack >= -tol;
  return r;
}

CertResult CertResult::leq(double lhs, double rhs, double tol) {
  CertResult r;
  r.lhs = lhs;
  r.rhs = rhs;
  r.slack = rhs - lhs;
  r.holds = r.slack >= -tol;
  return r;
}

CertResult CertResult::eq(double lhs, double rhs, double tol) {
  CertResult r;
  r.lhs = lhs;
  r.rhs = rhs;
  r.slack = -std::abs(lhs - rhs);
  r.holds = r.slack >= -tol;
  return r;
}

nlohmann::json CertResult::to_json() const {
  return {{"lhs", lhs}, {"rhs", rhs}, {"slack", slack}, {"holds", holds}};
}

nlohmann::json AppendixCert::to_json() const {
  return {{"performance_difference", performance_difference.to_json()},
          {"visitation_tv", visitation_tv.to_json()},
          {"reference_bound", reference_bound.to_json()}};
}

nlohmann::json TvIdentityCert::to_json() const {
  return {{"current_policy", current_policy.to_json()},
          {"multi_policy", multi_policy.to_json()}};
}

void check_support(const TabularPolicy& pi, const TabularPolicy& pi_ref) {
  for (Eigen::Index s = 0; s < pi.probs.rows(); ++s) {
    for (Eigen::Index a = 0; a < pi.probs.cols(); ++a) {
      if (pi.probs(s, a) > 0.0 && pi_ref.probs(s, a) <= 0.0) {
        throw std::invalid_argument(
            "support violation: target policy has mass outside the "
            "reference policy's support");
      }
    }
  }
}

namespace {

void check_weights(const Eigen::VectorXd& nu, std::size_t priors) {
  if (static_cast<std::size_t>(nu.size()) != priors) {
    throw std::invalid_argument("nu length does not match policy count");
  }
  if (nu.minCoeff() < 0.0 || std::abs(nu.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("nu is not a distribution");
  }
}

/// E_{(s,a)~d}[ (pi(a|s)/pi_ref(a|s)) * f(s,a) ], written with the explicit
/// importance ratio so the support requirement is exercised.
double expected_ratio_value(const Eigen::VectorXd& d, const TabularPolicy& pi,
                            const TabularPolicy& pi_ref,
                            const Eigen::MatrixXd& f) {
  check_support(pi, pi_ref);
  double total = 0.0;
  for (Eigen::Index s = 0; s < f.rows(); ++s) {
    double per_state = 0.0;
    for (Eigen::Index a = 0; a < f.cols(); ++a) {
      const double ref = pi_ref.probs(s, a);
      if (ref <= 0.0) continue;  // pi is zero here too
      per_state += ref * (pi.probs(s, a) / ref) * f(s, a);
    }
    total += d[s] * per_state;
  }
  return total;
}

}  // namespace

CertResult verify_lb_standard(const TabularMdp& mdp, const TabularPolicy& pi_k,
                              const TabularPolicy& pi) {
  const OracleReport rep_k = solve_policy(mdp, pi_k);
  const OracleReport rep = solve_policy(mdp, pi);

  const double lhs = rep.J - rep_k.J;
  const double surrogate =
      expected_ratio_value(rep_k.d_pi, pi, pi_k, rep_k.A) / (1.0 - mdp.gamma);
  const double c = penalty_constant_from(rep_k.A, pi);
  const double tv = tv_state(pi, pi_k, rep_k.d_pi);
  const double penalty =
      2.0 * mdp.gamma * c / ((1.0 - mdp.gamma) * (1.0 - mdp.gamma)) * tv;
  return CertResult::geq(lhs, surrogate - penalty, kBoundTol);
}

CertResult verify_lb_generalized(const TabularMdp& mdp,
                                 const std::vector<TabularPolicy>& priors,
                                 const Eigen::VectorXd& nu,
                                 const TabularPolicy& pi) {
  if (priors.empty()) throw std::invalid_argument("no prior policies");
  check_weights(nu, priors.size());

  const TabularPolicy& pi_k = priors.front();
  const OracleReport rep_k = solve_policy(mdp, pi_k);
  const OracleReport rep = solve_policy(mdp, pi);
  const double c = penalty_constant_from(rep_k.A, pi);

  double surrogate = 0.0;
  double tv = 0.0;
  for (std::size_t i = 0; i < priors.size(); ++i) {
    check_support(pi_k, priors[i]);
    const OracleReport rep_i = solve_policy(mdp, priors[i]);
    surrogate +=
        nu[i] * expected_ratio_value(rep_i.d_pi, pi, priors[i], rep_k.A);
    tv += nu[i] * tv_state(pi, priors[i], rep_i.d_pi);
  }

  const double lhs = rep.J - rep_k.J;
  const double rhs =
      surrogate / (1.0 - mdp.gamma) -
      2.0 * mdp.gamma * c / ((1.0 - mdp.gamma) * (1.0 - mdp.gamma)) * tv;
  return CertResult::geq(lhs, rhs, kBoundTol);
}

CertResult verify_triangle_decomposition(const TabularMdp& mdp,
                                         const std::vector<TabularPolicy>& priors,
                                         const Eigen::VectorXd& nu,
                                         const TabularPolicy& pi) {
  if (priors.empty()) throw std::invalid_argument("no prior policies");
  check_weights(nu, priors.size());

  const int m = static_cast<int>(priors.size());
  std::vector<Eigen::VectorXd> d(m);
  for (int i = 0; i < m; ++i) d[i] = solve_policy(mdp, priors[i]).d_pi;

  double lhs = 0.0;
  double rhs = 0.0;
  for (int i = 0; i < m; ++i) {
    lhs += nu[i] * tv_state(pi, priors[i], d[i]);
    rhs += nu[i] * tv_state(pi, priors.front(), d[i]);
  }
  // Consecutive-policy corrections: pi_{k-j+1} is priors[j-1].
  for (int j = 1; j < m; ++j) {
    for (int i = j; i < m; ++i) {
      rhs += nu[i] * tv_state(priors[j - 1], priors[j], d[i]);
    }
  }
  return CertResult::leq(lhs, rhs, kBoundTol);
}

AppendixCert verify_appendix_lemmas(const TabularMdp& mdp,
                                    const TabularPolicy& pi_k,
                                    const TabularPolicy& pi,
                                    const TabularPolicy& pi_ref) {
  const OracleReport rep_k = solve_policy(mdp, pi_k);
  const OracleReport rep = solve_policy(mdp, pi);
  const OracleReport rep_ref = solve_policy(mdp, pi_ref);

  AppendixCert cert;

  // (a) J(pi) - J(pi_k) = E_{s~d_pi} E_{a~pi}[A^{pi_k}] / (1 - gamma).
  const double improvement = rep.J - rep_k.J;
  const double expected_adv =
      rep.d_pi.dot((pi.probs.array() * rep_k.A.array()).rowwise().sum().matrix());
  cert.performance_difference = CertResult::eq(
      improvement, expected_adv / (1.0 - mdp.gamma), kBoundTol);

  // (b) TV(d_pi, d_ref) <= gamma/(1-gamma) * E_{s~d_ref}[TV(pi, pi_ref)].
  const double visitation_tv = 0.5 * (rep.d_pi - rep_ref.d_pi).lpNorm<1>();
  cert.visitation_tv = CertResult::leq(
      visitation_tv,
      mdp.gamma / (1.0 - mdp.gamma) * tv_state(pi, pi_ref, rep_ref.d_pi),
      kBoundTol);

  // (c) Lower bound with expectations taken under the reference policy.
  {
    const double surrogate =
        expected_ratio_value(rep_ref.d_pi, pi, pi_ref, rep_k.A) /
        (1.0 - mdp.gamma);
    const double c = penalty_constant_from(rep_k.A, pi);
    const double penalty = 2.0 * mdp.gamma * c /
                           ((1.0 - mdp.gamma) * (1.0 - mdp.gamma)) *
                           tv_state(pi, pi_ref, rep_ref.d_pi);
    cert.reference_bound =
        CertResult::geq(improvement, surrogate - penalty, kBoundTol);
  }
  return cert;
}

TvIdentityCert verify_tv_ratio_identities(const TabularMdp& mdp,
                                          const std::vector<TabularPolicy>& priors,
                                          const Eigen::VectorXd& nu,
                                          const TabularPolicy& pi) {
  if (priors.empty()) throw std::invalid_argument("no prior policies");
  check_weights(nu, priors.size());
  const TabularPolicy& pi_k = priors.front();

  const auto ratio_gap = [&](const TabularPolicy& behavior,
                             const Eigen::VectorXd& d) {
    check_support(pi, behavior);
    check_support(pi_k, behavior);
    double total = 0.0;
    for (Eigen::Index s = 0; s < pi.probs.rows(); ++s) {
      double per_state = 0.0;
      for (Eigen::Index a = 0; a < pi.probs.cols(); ++a) {
        const double b = behavior.probs(s, a);
        if (b <= 0.0) continue;
        per_state += b * std::abs(pi.probs(s, a) / b - pi_k.probs(s, a) / b);
      }
      total += d[s] * per_state;
    }
    return 0.5 * total;
  };

  TvIdentityCert cert;
  const Eigen::VectorXd d_k = solve_policy(mdp, pi_k).d_pi;
  cert.current_policy =
      CertResult::eq(tv_state(pi, pi_k, d_k), ratio_gap(pi_k, d_k),
                     kIdentityTol);

  double lhs = 0.0;
  double rhs = 0.0;
  for (std::size_t i = 0; i < priors.size(); ++i) {
    const Eigen::VectorXd d_i = solve_policy(mdp, priors[i]).d_pi;
    lhs += nu[i] * tv_state(pi, pi_k, d_i);
    rhs += nu[i] * ratio_gap(priors[i], d_i);
  }
  cert.multi_policy = CertResult::eq(lhs, rhs, kIdentityTol);
  return cert;
}

}  // namespace geppo
