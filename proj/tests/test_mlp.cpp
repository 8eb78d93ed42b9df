#include "geppo/mlp.hpp"

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "geppo/rng.hpp"

using namespace geppo;

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kGradTol = 1e-4;

/// Central finite differences of a scalar function of the parameter vector.
template <typename F>
Eigen::VectorXd finite_difference(const F& f, const Eigen::VectorXd& theta) {
  Eigen::VectorXd g(theta.size());
  Eigen::VectorXd probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + kFdStep;
    const double hi = f(probe);
    probe[i] = theta[i] - kFdStep;
    const double lo = f(probe);
    probe[i] = theta[i];
    g[i] = (hi - lo) / (2.0 * kFdStep);
  }
  return g;
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / denom;
}

}  // namespace

TEST_CASE("gaussian log-density at the mode") {
  const int act_dim = 3;
  GaussianPolicy policy(2, {8}, act_dim);
  Rng rng(21);
  Eigen::VectorXd theta = policy.init_params(
      rng, Eigen::VectorXd::Constant(act_dim, -1.0),
      Eigen::VectorXd::Constant(act_dim, 1.0), 1.0);
  theta.tail(act_dim).setZero();  // unit std

  const Eigen::VectorXd obs = rng.normal_vector(2);
  const Eigen::VectorXd mode = policy.mean_action(theta, obs);
  const double lp = policy.logprob(theta, obs, mode);
  CHECK(lp == doctest::Approx(-0.5 * act_dim *
                              std::log(2.0 * std::numbers::pi_v<double>))
                  .epsilon(1e-12));

  // Scaling every std by e lowers the mode density by act_dim nats.
  Eigen::VectorXd wide = theta;
  wide.tail(act_dim).array() += 1.0;
  CHECK(policy.logprob(wide, obs, policy.mean_action(wide, obs)) ==
        doctest::Approx(lp - act_dim).epsilon(1e-12));
}

TEST_CASE("policy log-density gradient matches finite differences") {
  GaussianPolicy policy(3, {8, 6}, 2);
  Rng rng(22);
  for (int draw = 0; draw < 20; ++draw) {
    Eigen::VectorXd theta = policy.init_params(
        rng, Eigen::VectorXd::Constant(2, -1.0),
        Eigen::VectorXd::Constant(2, 1.0), 1.0);
    theta.tail(2) = rng.normal_vector(2) * 0.3;
    const Eigen::VectorXd obs = rng.normal_vector(3);
    const Eigen::VectorXd action = rng.normal_vector(2);

    const Eigen::VectorXd analytic = policy.logprob_grad(theta, obs, action);
    const Eigen::VectorXd numeric = finite_difference(
        [&](const Eigen::VectorXd& t) { return policy.logprob(t, obs, action); },
        theta);
    CHECK(relative_error(analytic, numeric) < kGradTol);
  }
}

TEST_CASE("value gradient matches finite differences") {
  ValueFunction value(3, {8, 6});
  Rng rng(23);
  for (int draw = 0; draw < 20; ++draw) {
    const Eigen::VectorXd theta = value.init_params(rng);
    const Eigen::VectorXd obs = rng.normal_vector(3);
    const Eigen::VectorXd analytic = value.grad(theta, obs);
    const Eigen::VectorXd numeric = finite_difference(
        [&](const Eigen::VectorXd& t) { return value.forward(t, obs); }, theta);
    CHECK(relative_error(analytic, numeric) < kGradTol);
  }
}

TEST_CASE("batched weighted gradient equals the sum of per-sample gradients") {
  GaussianPolicy policy(2, {6}, 2);
  Rng rng(24);
  const Eigen::VectorXd theta = policy.init_params(
      rng, Eigen::VectorXd::Constant(2, -1.0), Eigen::VectorXd::Constant(2, 1.0),
      1.0);
  const int m = 5;
  Eigen::MatrixXd obs(2, m), act(2, m);
  Eigen::VectorXd coeff(m);
  for (int s = 0; s < m; ++s) {
    obs.col(s) = rng.normal_vector(2);
    act.col(s) = rng.normal_vector(2);
    coeff[s] = rng.uniform(-1.0, 1.0);
  }
  const Eigen::VectorXd batched =
      policy.weighted_logprob_grad(theta, obs, act, coeff);
  Eigen::VectorXd summed = Eigen::VectorXd::Zero(theta.size());
  for (int s = 0; s < m; ++s) {
    summed += coeff[s] * policy.logprob_grad(theta, obs.col(s), act.col(s));
  }
  CHECK(relative_error(batched, summed) < 1e-12);
}

TEST_CASE("sampling") {
  GaussianPolicy policy(2, {6}, 2);
  Rng init(25);
  Eigen::VectorXd theta = policy.init_params(
      init, Eigen::VectorXd::Constant(2, -1.0), Eigen::VectorXd::Constant(2, 1.0),
      1.0);
  const Eigen::VectorXd obs = init.normal_vector(2);

  SUBCASE("vanishing std collapses to the mean") {
    Eigen::VectorXd tight = theta;
    tight.tail(2).setConstant(-20.0);
    Rng rng(26);
    const Eigen::VectorXd a = policy.sample(tight, obs, rng);
    CHECK((a - policy.mean_action(tight, obs)).cwiseAbs().maxCoeff() < 1e-7);
  }

  SUBCASE("fixed seed reproduces the draw") {
    Rng rng_a(27), rng_b(27);
    CHECK(policy.sample(theta, obs, rng_a) == policy.sample(theta, obs, rng_b));
  }

  SUBCASE("empirical moments match the parameters") {
    const int n = 100000;
    Rng rng(28);
    const Eigen::VectorXd mu = policy.mean_action(theta, obs);
    const Eigen::VectorXd sigma = policy.log_std(theta).array().exp();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd a = policy.sample(theta, obs, rng);
      sum += a;
      sum_sq += a.cwiseProduct(a);
    }
    const Eigen::VectorXd mean = sum / n;
    const Eigen::VectorXd var = sum_sq / n - mean.cwiseProduct(mean);
    for (int d = 0; d < 2; ++d) {
      const double se_mean = sigma[d] / std::sqrt(double(n));
      CHECK(std::abs(mean[d] - mu[d]) < 3.0 * se_mean);
      const double se_std = sigma[d] / std::sqrt(2.0 * n);
      CHECK(std::abs(std::sqrt(var[d]) - sigma[d]) < 3.0 * se_std);
    }
  }
}

TEST_CASE("log-density integrates to one in 1-D") {
  GaussianPolicy policy(1, {4}, 1);
  Rng rng(29);
  const Eigen::VectorXd theta = policy.init_params(
      rng, Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0),
      1.0);
  const Eigen::VectorXd obs = rng.normal_vector(1);
  const double mu = policy.mean_action(theta, obs)[0];
  const double sigma = std::exp(policy.log_std(theta)[0]);

  const int grid = 4000;
  const double lo = mu - 10.0 * sigma;
  const double hi = mu + 10.0 * sigma;
  const double h = (hi - lo) / grid;
  double integral = 0.0;
  for (int i = 0; i <= grid; ++i) {
    Eigen::VectorXd a(1);
    a << lo + i * h;
    const double density = std::exp(policy.logprob(theta, obs, a));
    integral += (i == 0 || i == grid) ? 0.5 * density : density;
  }
  integral *= h;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("value function architecture") {
  SUBCASE("zero weights give zero output") {
    ValueFunction value(3, {8, 8});
    const Eigen::VectorXd theta = Eigen::VectorXd::Zero(value.param_count());
    Rng rng(30);
    CHECK(value.forward(theta, rng.normal_vector(3)) == 0.0);
  }

  SUBCASE("no hidden layers reduce to an affine map") {
    ValueFunction value(3, {});
    Rng rng(31);
    const Eigen::VectorXd theta = value.init_params(rng);
    const Eigen::VectorXd w = theta.head(3);
    const double b = theta[3];
    const Eigen::VectorXd s = rng.normal_vector(3);
    CHECK(value.forward(theta, s) == doctest::Approx(w.dot(s) + b).epsilon(1e-12));
  }
}

TEST_CASE("parameter initialization is seed-deterministic") {
  GaussianPolicy policy(4, {16, 16}, 2);
  Rng a(33), b(33);
  const auto low = Eigen::VectorXd::Constant(2, -1.0);
  const auto high = Eigen::VectorXd::Constant(2, 1.0);
  CHECK(policy.init_params(a, low, high, 1.0) ==
        policy.init_params(b, low, high, 1.0));
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    AdamState adam(3, 0.1);
    Eigen::VectorXd params = Eigen::VectorXd::Ones(3);
    adam.apply(params, Eigen::VectorXd::Zero(3));
    CHECK(params == Eigen::VectorXd::Ones(3));
    CHECK(adam.step == 1);
  }

  SUBCASE("first step has magnitude close to the learning rate") {
    AdamState adam(1, 0.1);
    Eigen::VectorXd params = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd grad(1);
    grad << 7.3;
    adam.apply(params, grad);
    CHECK(std::abs(params[0] + 0.1) < 1e-6);  // -lr * sign(g)
  }

  SUBCASE("converges on a scalar quadratic with a decaying envelope") {
    // The momentum term overshoots zero, so |x| oscillates; what decays
    // monotonically is the peak envelope of the oscillation.
    AdamState adam(1, 0.1);
    Eigen::VectorXd x(1);
    x << 1.0;
    std::vector<double> trace;
    for (int t = 0; t < 100; ++t) {
      Eigen::VectorXd g(1);
      g << x[0];  // gradient of x^2/2
      adam.apply(x, g);
      trace.push_back(std::abs(x[0]));
    }
    std::vector<double> peaks;
    for (std::size_t i = 1; i + 1 < trace.size(); ++i) {
      if (trace[i] >= trace[i - 1] && trace[i] >= trace[i + 1]) {
        peaks.push_back(trace[i]);
      }
    }
    REQUIRE(peaks.size() >= 3);
    for (std::size_t i = 1; i < peaks.size(); ++i) {
      CHECK(peaks[i] < peaks[i - 1]);
    }
    CHECK(trace.back() < 0.01);
  }

  SUBCASE("non-finite gradients are rejected") {
    AdamState adam(2, 0.1);
    Eigen::VectorXd params = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd bad(2);
    bad << 1.0, std::nan("");
    CHECK_THROWS_AS(adam.apply(params, bad), std::invalid_argument);
  }
}

TEST_CASE("log std clamping") {
  GaussianPolicy policy(2, {4}, 2);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(policy.param_count());
  theta.tail(2) << -50.0, 10.0;
  policy.clamp_log_std(theta);
  CHECK(theta[policy.param_count() - 2] == GaussianPolicy::kLogStdMin);
  CHECK(theta[policy.param_count() - 1] == GaussianPolicy::kLogStdMax);
}
