#include "geppo/weights.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace geppo {

namespace {

constexpr double kSnapTol = 1e-12;

/// Weights below kSnapTol are snapped to zero, the vector is renormalized and
/// trailing zeros are trimmed; the surviving length defines the effective M.
PolicyWeights finalize(Eigen::VectorXd nu) {
  for (Eigen::Index i = 0; i < nu.size(); ++i) {
    if (nu[i] < kSnapTol) nu[i] = 0.0;
  }
  nu /= nu.sum();
  Eigen::Index m = nu.size();
  while (m > 1 && nu[m - 1] == 0.0) --m;
  PolicyWeights w;
  w.nu = nu.head(m);
  w.M = static_cast<int>(m);
  w.validate();
  return w;
}

/// Simplex projection of the linear-in-age family nu_i = a - b*i restricted
/// to the prefix support {0, .., m-1}; used as a fallback sanity refinement
/// if the closed-form active-set pass produced an invalid point.
Eigen::VectorXd project_simplex(Eigen::VectorXd v) {
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0;
  double theta = 0.0;
  int rho = 0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) {
      rho = static_cast<int>(j + 1);
      theta = t;
    }
  }
  (void)rho;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v[i] = std::max(v[i] - theta, 0.0);
  }
  return v;
}

}  // namespace

double PolicyWeights::expected_age_plus_one() const {
  double total = 0.0;
  for (Eigen::Index i = 0; i < nu.size(); ++i) {
    total += nu[i] * static_cast<double>(i + 1);
  }
  return total;
}

double PolicyWeights::sum_sq() const { return nu.squaredNorm(); }

void PolicyWeights::validate() const {
  if (M < 1 || nu.size() != M) {
    throw std::invalid_argument("policy weights have inconsistent length");
  }
  if (nu.minCoeff() < 0.0 || std::abs(nu.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("nu is not a distribution");
  }
}

nlohmann::json PolicyWeights::to_json() const {
  return {{"nu", std::vector<double>(nu.begin(), nu.end())}, {"M", M}};
}

WeightProgram weight_program_from_string(const std::string& s) {
  if (s == "essopt") return WeightProgram::essopt;
  if (s == "tvopt") return WeightProgram::tvopt;
  if (s == "uniform") return WeightProgram::uniform;
  throw std::invalid_argument("unknown weight program: " + s);
}

std::string to_string(WeightProgram p) {
  switch (p) {
    case WeightProgram::essopt: return "essopt";
    case WeightProgram::tvopt: return "tvopt";
    case WeightProgram::uniform: return "uniform";
  }
  throw std::logic_error("unreachable");
}

double effective_sample_size(const PolicyWeights& w, int n) {
  return static_cast<double>(n) / w.sum_sq();
}

double epsilon_mapping(const PolicyWeights& w, double eps_ppo) {
  if (eps_ppo <= 0.0) throw std::invalid_argument("eps_ppo must be positive");
  return eps_ppo / w.expected_age_plus_one();
}

double tv_factor_uniform(int B) {
  if (B < 1) throw std::invalid_argument("B must be >= 1");
  return 2.0 * B / (B + 1.0);
}

double ess_factor_uniform(int B) {
  if (B < 1) throw std::invalid_argument("B must be >= 1");
  return (2.0 * B - 1.0) / B;
}

PolicyWeights uniform_weights(int M) {
  if (M < 1) throw std::invalid_argument("M must be >= 1");
  PolicyWeights w;
  w.nu = Eigen::VectorXd::Constant(M, 1.0 / M);
  w.M = M;
  return w;
}

PolicyWeights solve_tvopt(int B, int M_bar) {
  if (B < 1) throw std::invalid_argument("B must be >= 1");
  if (M_bar < B) throw std::invalid_argument("tvopt requires M_bar >= B");
  if (B == 1) {
    // Norm ball covers the simplex; put all mass on the newest policy.
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(1);
    nu[0] = 1.0;
    return finalize(nu);
  }
  if (M_bar == B) {
    // The uniform point is the only simplex point with sum nu^2 <= 1/B.
    return uniform_weights(B);
  }

  // Stationarity gives nu_i = a - b*i on a prefix support of size m with the
  // norm constraint binding. Shrink the support until nonnegative.
  for (int m = M_bar; m > B; --m) {
    const double mm = m;
    const double b2 =
        (1.0 / B - 1.0 / mm) * 12.0 / (mm * (mm - 1.0) * (mm + 1.0));
    if (b2 < 0.0) continue;
    const double b = std::sqrt(b2);
    const double a = 1.0 / mm + b * (mm - 1.0) / 2.0;
    if (a - b * (mm - 1.0) < -1e-15) continue;
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < m; ++i) nu[i] = std::max(a - b * i, 0.0);
    // Dropped indices must satisfy the multiplier sign condition, which for
    // this family reduces to the linear extension being nonpositive.
    if (m < M_bar && a - b * m > 1e-12) continue;
    return finalize(nu);
  }
  // Unreachable for valid inputs; project the uniform-B point as a fallback.
  return finalize(project_simplex(uniform_weights(B).nu));
}

PolicyWeights solve_essopt(int B, int M_bar) {
  if (B < 1) throw std::invalid_argument("B must be >= 1");
  if (M_bar < 2 * B - 1) {
    throw std::invalid_argument("essopt requires M_bar >= 2B-1");
  }
  if (B == 1) {
    // E[i+1] = 1 forces all mass on the newest policy.
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(1);
    nu[0] = 1.0;
    return finalize(nu);
  }

  for (int m = M_bar; m >= 2; --m) {
    const double mm = m;
    const double b =
        ((mm + 1.0) / 2.0 - B) * 12.0 / (mm * (mm - 1.0) * (mm + 1.0));
    if (b < -1e-15) continue;  // would need increasing weights: infeasible m
    const double a = 1.0 / mm + b * (mm - 1.0) / 2.0;
    if (a - b * (mm - 1.0) < -1e-15) continue;
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < m; ++i) nu[i] = std::max(a - b * i, 0.0);
    if (m < M_bar && a - b * m > 1e-12) continue;
    return finalize(nu);
  }
  return finalize(project_simplex(uniform_weights(2 * B - 1).nu));
}

GridResult grid_oracle(WeightProgram program, int B, int M_bar, double step) {
  if (program == WeightProgram::uniform) {
    throw std::invalid_argument("grid oracle applies to essopt and tvopt");
  }
  if (B < 1 || M_bar < 1) throw std::invalid_argument("bad B or M_bar");
  if (step > 1e-2 + 1e-15) {
    throw std::invalid_argument("grid step must be <= 1e-2");
  }
  if (M_bar > 5) {
    throw std::invalid_argument("grid oracle limited to M_bar <= 5");
  }
  const auto ticks = static_cast<std::int64_t>(std::llround(1.0 / step));
  if (ticks < 1) throw std::invalid_argument("bad grid step");

  // Enumerate compositions k_0 + ... + k_{M-1} = ticks. All feasibility and
  // objective tests are integer-exact: with nu_i = k_i/ticks,
  //   sum nu_i (i+1) = B        <=>  sum k_i (i+1) = B * ticks
  //   sum nu_i^2 <= 1/B         <=>  B * sum k_i^2 <= ticks^2
  //   objective sum nu_i^2      ->  sum k_i^2
  //   objective sum nu_i (i+1)  ->  sum k_i (i+1)
  const bool ess = program == WeightProgram::essopt;
  const std::int64_t target_age = static_cast<std::int64_t>(B) * ticks;

  std::vector<std::int64_t> k(M_bar, 0);
  std::vector<std::int64_t> best(M_bar, 0);
  std::int64_t best_obj = -1;
  std::int64_t visited = 0;
  constexpr std::int64_t kBudget = 30000000;

  // Depth-first over slots; running sums carried down the recursion.
  const auto recurse = [&](auto&& self, int slot, std::int64_t remaining,
                           std::int64_t age_sum, std::int64_t sq_sum) -> void {
    if (++visited > kBudget) {
      throw std::runtime_error("grid oracle enumeration budget exceeded");
    }
    if (slot == M_bar - 1) {
      k[slot] = remaining;
      const std::int64_t age = age_sum + remaining * (slot + 1);
      const std::int64_t sq = sq_sum + remaining * remaining;
      bool feasible;
      std::int64_t obj;
      if (ess) {
        feasible = age == target_age;
        obj = sq;
      } else {
        feasible = static_cast<std::int64_t>(B) * sq <= ticks * ticks;
        obj = age;
      }
      if (feasible && (best_obj < 0 || obj < best_obj)) {
        best_obj = obj;
        best = k;
      }
      return;
    }
    for (std::int64_t v = 0; v <= remaining; ++v) {
      k[slot] = v;
      self(self, slot + 1, remaining - v, age_sum + v * (slot + 1),
           sq_sum + v * v);
    }
  };
  recurse(recurse, 0, ticks, 0, 0);

  GridResult result;
  if (best_obj < 0) return result;
  result.feasible_found = true;
  result.nu.resize(M_bar);
  for (int i = 0; i < M_bar; ++i) {
    result.nu[i] = static_cast<double>(best[i]) / static_cast<double>(ticks);
  }
  if (ess) {
    result.objective = result.nu.squaredNorm();
  } else {
    result.objective = 0.0;
    for (int i = 0; i < M_bar; ++i) result.objective += result.nu[i] * (i + 1);
  }
  return result;
}

}  // namespace geppo
