#include "geppo/tabular.hpp"

#include <cmath>
#include <stdexcept>

#include "geppo/rng.hpp"

namespace geppo {

namespace {

constexpr double kStochasticTol = 1e-12;
constexpr double kSolveTol = 1e-9;

void check_distribution(const Eigen::VectorXd& p, const char* what) {
  if (p.minCoeff() < 0.0) {
    throw std::invalid_argument(std::string(what) + " has a negative entry");
  }
  if (std::abs(p.sum() - 1.0) > kStochasticTol) {
    throw std::invalid_argument(std::string(what) + " does not sum to 1");
  }
}

}  // namespace

void TabularMdp::validate() const {
  if (num_states < 1 || num_actions < 1) {
    throw std::invalid_argument("mdp must have at least one state and action");
  }
  if (transition.rows() != num_states * num_actions ||
      transition.cols() != num_states) {
    throw std::invalid_argument("transition tensor has wrong shape");
  }
  if (reward.rows() != num_states || reward.cols() != num_actions) {
    throw std::invalid_argument("reward matrix has wrong shape");
  }
  if (rho0.size() != num_states) {
    throw std::invalid_argument("rho0 has wrong length");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("gamma must lie in [0, 1)");
  }
  if (!reward.allFinite()) {
    throw std::invalid_argument("reward matrix must be finite");
  }
  for (Eigen::Index r = 0; r < transition.rows(); ++r) {
    check_distribution(transition.row(r).transpose(), "transition row");
  }
  check_distribution(rho0, "rho0");
}

void TabularPolicy::validate() const {
  for (Eigen::Index s = 0; s < probs.rows(); ++s) {
    check_distribution(probs.row(s).transpose(), "policy row");
  }
}

nlohmann::json TabularMdp::to_json() const {
  nlohmann::json j;
  j["gamma"] = gamma;
  j["rho0"] = std::vector<double>(rho0.begin(), rho0.end());
  auto reward_rows = nlohmann::json::array();
  for (int s = 0; s < num_states; ++s) {
    reward_rows.push_back(
        std::vector<double>(reward.row(s).begin(), reward.row(s).end()));
  }
  j["reward"] = std::move(reward_rows);
  auto transition_tensor = nlohmann::json::array();
  for (int s = 0; s < num_states; ++s) {
    auto per_action = nlohmann::json::array();
    for (int a = 0; a < num_actions; ++a) {
      const auto r = transition.row(row(s, a));
      per_action.push_back(std::vector<double>(r.begin(), r.end()));
    }
    transition_tensor.push_back(std::move(per_action));
  }
  j["transition"] = std::move(transition_tensor);
  return j;
}

TabularMdp TabularMdp::from_json(const nlohmann::json& j) {
  TabularMdp mdp;
  const auto& transition = j.at("transition");
  mdp.num_states = static_cast<int>(transition.size());
  if (mdp.num_states == 0) throw std::invalid_argument("empty transition");
  mdp.num_actions = static_cast<int>(transition.at(0).size());
  mdp.gamma = j.at("gamma").get<double>();

  mdp.transition.resize(mdp.num_states * mdp.num_actions, mdp.num_states);
  mdp.reward.resize(mdp.num_states, mdp.num_actions);
  mdp.rho0.resize(mdp.num_states);

  const auto& reward = j.at("reward");
  const auto& rho0 = j.at("rho0");
  for (int s = 0; s < mdp.num_states; ++s) {
    mdp.rho0[s] = rho0.at(s).get<double>();
    for (int a = 0; a < mdp.num_actions; ++a) {
      mdp.reward(s, a) = reward.at(s).at(a).get<double>();
      const auto& dest = transition.at(s).at(a);
      for (int sp = 0; sp < mdp.num_states; ++sp) {
        mdp.transition(mdp.row(s, a), sp) = dest.at(sp).get<double>();
      }
    }
  }
  mdp.validate();
  return mdp;
}

Eigen::MatrixXd policy_transition(const TabularMdp& mdp,
                                  const TabularPolicy& pi) {
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  Eigen::MatrixXd p_pi(S, S);
  for (int s = 0; s < S; ++s) {
    p_pi.row(s) = pi.probs.row(s) * mdp.transition.middleRows(s * A, A);
  }
  return p_pi;
}

OracleReport solve_policy(const TabularMdp& mdp, const TabularPolicy& pi) {
  mdp.validate();
  pi.validate();
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  if (pi.probs.rows() != S || pi.probs.cols() != A) {
    throw std::invalid_argument("policy shape does not match mdp");
  }

  const Eigen::MatrixXd p_pi = policy_transition(mdp, pi);
  const Eigen::VectorXd r_pi =
      (pi.probs.array() * mdp.reward.array()).rowwise().sum();

  const Eigen::MatrixXd bellman =
      Eigen::MatrixXd::Identity(S, S) - mdp.gamma * p_pi;

  OracleReport rep;
  rep.V = bellman.partialPivLu().solve(r_pi);
  if ((bellman * rep.V - r_pi).cwiseAbs().maxCoeff() > kSolveTol) {
    throw std::runtime_error("Bellman solve residual exceeds tolerance");
  }

  const Eigen::VectorXd q_flat =
      Eigen::VectorXd(mdp.reward.reshaped<Eigen::RowMajor>()) +
      mdp.gamma * (mdp.transition * rep.V);
  rep.Q = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                         Eigen::Dynamic, Eigen::RowMajor>>(
      q_flat.data(), S, A);
  rep.A = rep.Q;
  rep.A.colwise() -= rep.V;

  rep.d_pi = (Eigen::MatrixXd::Identity(S, S) - mdp.gamma * p_pi.transpose())
                 .partialPivLu()
                 .solve((1.0 - mdp.gamma) * mdp.rho0);
  if (std::abs(rep.d_pi.sum() - 1.0) > kSolveTol) {
    throw std::runtime_error("visitation solve residual exceeds tolerance");
  }

  rep.J = mdp.rho0.dot(rep.V);
  return rep;
}

double tv_state(const TabularPolicy& pi_a, const TabularPolicy& pi_b,
                const Eigen::VectorXd& d) {
  if (pi_a.probs.rows() != pi_b.probs.rows() ||
      pi_a.probs.cols() != pi_b.probs.cols() ||
      d.size() != pi_a.probs.rows()) {
    throw std::invalid_argument("tv_state shape mismatch");
  }
  const Eigen::VectorXd per_state =
      0.5 * (pi_a.probs - pi_b.probs).cwiseAbs().rowwise().sum();
  return d.dot(per_state);
}

double penalty_constant_from(const Eigen::MatrixXd& advantage_k,
                             const TabularPolicy& pi) {
  return (pi.probs.array() * advantage_k.array())
      .rowwise()
      .sum()
      .abs()
      .maxCoeff();
}

double penalty_constant(const TabularMdp& mdp, const TabularPolicy& pi,
                        const TabularPolicy& pi_k) {
  const OracleReport rep_k = solve_policy(mdp, pi_k);
  return penalty_constant_from(rep_k.A, pi);
}

TabularMdp random_mdp(Rng& rng, int max_states, int max_actions,
                      double gamma_lo, double gamma_hi) {
  TabularMdp mdp;
  mdp.num_states = rng.uniform_int(2, max_states);
  mdp.num_actions = rng.uniform_int(2, max_actions);
  const int S = mdp.num_states;
  const int A = mdp.num_actions;

  mdp.transition.resize(S * A, S);
  for (Eigen::Index r = 0; r < mdp.transition.rows(); ++r) {
    for (int sp = 0; sp < S; ++sp) {
      mdp.transition(r, sp) = rng.uniform(0.05, 1.05);
    }
    mdp.transition.row(r) /= mdp.transition.row(r).sum();
  }

  mdp.reward.resize(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) mdp.reward(s, a) = rng.uniform(-1.0, 1.0);
  }

  mdp.rho0.resize(S);
  for (int s = 0; s < S; ++s) mdp.rho0[s] = rng.uniform(0.05, 1.05);
  mdp.rho0 /= mdp.rho0.sum();

  mdp.gamma = rng.uniform(gamma_lo, gamma_hi);
  return mdp;
}

TabularPolicy random_policy(Rng& rng, int num_states, int num_actions) {
  TabularPolicy pi;
  pi.probs.resize(num_states, num_actions);
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      pi.probs(s, a) = rng.uniform(0.05, 1.05);
    }
    pi.probs.row(s) /= pi.probs.row(s).sum();
  }
  return pi;
}

}  // namespace geppo
