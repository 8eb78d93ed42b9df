#include "geppo/mlp.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "geppo/rng.hpp"

namespace geppo {

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) {
    throw std::invalid_argument("mlp needs at least input and output sizes");
  }
  for (int s : sizes_) {
    if (s < 1) throw std::invalid_argument("mlp layer sizes must be positive");
  }
  int offset = 0;
  for (int l = 0; l + 1 < static_cast<int>(sizes_.size()); ++l) {
    w_offset_.push_back(offset);
    offset += sizes_[l + 1] * sizes_[l];
    b_offset_.push_back(offset);
    offset += sizes_[l + 1];
  }
  param_count_ = offset;
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(const Eigen::VectorXd& theta,
                                              int layer) const {
  return {theta.data() + w_offset_[layer], sizes_[layer + 1], sizes_[layer]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(const Eigen::VectorXd& theta,
                                            int layer) const {
  return {theta.data() + b_offset_[layer], sizes_[layer + 1]};
}

Eigen::VectorXd Mlp::init_params(Rng& rng) const {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(param_count_);
  for (int l = 0; l < layers(); ++l) {
    const double scale = std::sqrt(3.0 / sizes_[l]);
    double* w = theta.data() + w_offset_[l];
    const int count = sizes_[l + 1] * sizes_[l];
    for (int i = 0; i < count; ++i) w[i] = rng.uniform(-scale, scale);
  }
  return theta;
}

Eigen::MatrixXd Mlp::forward(const Eigen::VectorXd& theta,
                             const Eigen::MatrixXd& X, MlpCache* cache) const {
  if (theta.size() != param_count_) {
    throw std::invalid_argument("parameter vector has wrong length");
  }
  if (X.rows() != in_dim()) {
    throw std::invalid_argument("input has wrong dimension");
  }
  if (!theta.allFinite()) {
    throw std::invalid_argument("non-finite parameters");
  }
  if (cache) {
    cache->input = X;
    cache->hidden.clear();
  }
  Eigen::MatrixXd h = X;
  for (int l = 0; l < layers(); ++l) {
    Eigen::MatrixXd z = weight(theta, l) * h;
    z.colwise() += bias(theta, l);
    if (l + 1 < layers()) {
      h = z.array().tanh();
      if (cache) cache->hidden.push_back(h);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Eigen::VectorXd Mlp::forward1(const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& x) const {
  return forward(theta, x, nullptr);
}

Eigen::VectorXd Mlp::backward(const Eigen::VectorXd& theta,
                              const MlpCache& cache,
                              const Eigen::MatrixXd& dY) const {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(param_count_);
  Eigen::MatrixXd g = dY;
  for (int l = layers() - 1; l >= 0; --l) {
    const Eigen::MatrixXd& below =
        (l == 0) ? cache.input : cache.hidden[l - 1];
    Eigen::Map<Eigen::MatrixXd>(grad.data() + w_offset_[l], sizes_[l + 1],
                                sizes_[l])
        .noalias() = g * below.transpose();
    Eigen::Map<Eigen::VectorXd>(grad.data() + b_offset_[l], sizes_[l + 1]) =
        g.rowwise().sum();
    if (l > 0) {
      g = (weight(theta, l).transpose() * g).array() *
          (1.0 - below.array().square());
    }
  }
  return grad;
}

GaussianPolicy::GaussianPolicy(int obs_dim, const std::vector<int>& hidden,
                               int act_dim)
    : mean_net_([&] {
        std::vector<int> sizes{obs_dim};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(act_dim);
        return sizes;
      }()),
      act_dim_(act_dim) {}

Eigen::VectorXd GaussianPolicy::init_params(Rng& rng,
                                            const Eigen::VectorXd& action_low,
                                            const Eigen::VectorXd& action_high,
                                            double std_multiple) const {
  Eigen::VectorXd theta(param_count());
  theta.head(mean_net_.param_count()) = mean_net_.init_params(rng);
  for (int d = 0; d < act_dim_; ++d) {
    const double half_range = 0.5 * (action_high[d] - action_low[d]);
    theta[mean_net_.param_count() + d] = std::log(std_multiple * half_range);
  }
  clamp_log_std(theta);
  return theta;
}

void GaussianPolicy::clamp_log_std(Eigen::VectorXd& theta) const {
  auto tail = theta.tail(act_dim_);
  tail = tail.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

double GaussianPolicy::logprob(const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& obs,
                               const Eigen::VectorXd& action) const {
  return logprob_batch(theta, obs, action)[0];
}

Eigen::VectorXd GaussianPolicy::logprob_batch(
    const Eigen::VectorXd& theta, const Eigen::MatrixXd& obs,
    const Eigen::MatrixXd& actions) const {
  const Eigen::VectorXd ls = log_std(theta);
  const Eigen::MatrixXd mu =
      mean_net_.forward(theta.head(mean_net_.param_count()), obs);
  const Eigen::ArrayXd inv_std = (-ls.array()).exp();
  const double log_norm =
      ls.sum() + 0.5 * act_dim_ * std::log(2.0 * std::numbers::pi_v<double>);

  Eigen::VectorXd lp(obs.cols());
  for (Eigen::Index s = 0; s < obs.cols(); ++s) {
    const Eigen::ArrayXd z = (actions.col(s) - mu.col(s)).array() * inv_std;
    lp[s] = -0.5 * z.square().sum() - log_norm;
  }
  return lp;
}

Eigen::VectorXd GaussianPolicy::logprob_grad(const Eigen::VectorXd& theta,
                                             const Eigen::VectorXd& obs,
                                             const Eigen::VectorXd& action) const {
  return weighted_logprob_grad(theta, obs, action, Eigen::VectorXd::Ones(1));
}

Eigen::VectorXd GaussianPolicy::weighted_logprob_grad(
    const Eigen::VectorXd& theta, const Eigen::MatrixXd& obs,
    const Eigen::MatrixXd& actions, const Eigen::VectorXd& coeff) const {
  const Eigen::VectorXd mlp_theta = theta.head(mean_net_.param_count());
  const Eigen::ArrayXd inv_var = (-2.0 * log_std(theta).array()).exp();

  MlpCache cache;
  const Eigen::MatrixXd mu = mean_net_.forward(mlp_theta, obs, &cache);
  const Eigen::MatrixXd diff = actions - mu;

  // d logp / d mu = diff / sigma^2, scaled per sample by coeff.
  Eigen::MatrixXd d_mu = diff.array().colwise() * inv_var;
  d_mu.array().rowwise() *= coeff.transpose().array();

  Eigen::VectorXd grad(param_count());
  grad.head(mean_net_.param_count()) =
      mean_net_.backward(mlp_theta, cache, d_mu);

  // d logp / d log_std = (diff/sigma)^2 - 1 per dimension.
  const Eigen::MatrixXd sq =
      (diff.array().square().colwise() * inv_var).matrix();
  grad.tail(act_dim_) =
      sq * coeff - coeff.sum() * Eigen::VectorXd::Ones(act_dim_);
  return grad;
}

Eigen::VectorXd GaussianPolicy::mean_action(const Eigen::VectorXd& theta,
                                            const Eigen::VectorXd& obs) const {
  return mean_net_.forward1(theta.head(mean_net_.param_count()), obs);
}

Eigen::VectorXd GaussianPolicy::sample(const Eigen::VectorXd& theta,
                                       const Eigen::VectorXd& obs,
                                       Rng& rng) const {
  const Eigen::VectorXd mu = mean_action(theta, obs);
  const Eigen::ArrayXd std = log_std(theta).array().exp();
  return mu.array() + std * rng.normal_vector(act_dim_).array();
}

ValueFunction::ValueFunction(int obs_dim, const std::vector<int>& hidden)
    : net_([&] {
        std::vector<int> sizes{obs_dim};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(1);
        return sizes;
      }()) {}

double ValueFunction::forward(const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& obs) const {
  return net_.forward1(theta, obs)[0];
}

Eigen::VectorXd ValueFunction::forward_batch(const Eigen::VectorXd& theta,
                                             const Eigen::MatrixXd& obs) const {
  return net_.forward(theta, obs).row(0).transpose();
}

Eigen::VectorXd ValueFunction::grad(const Eigen::VectorXd& theta,
                                    const Eigen::VectorXd& obs) const {
  return weighted_grad(theta, obs, Eigen::VectorXd::Ones(1));
}

Eigen::VectorXd ValueFunction::weighted_grad(const Eigen::VectorXd& theta,
                                             const Eigen::MatrixXd& obs,
                                             const Eigen::VectorXd& coeff) const {
  MlpCache cache;
  net_.forward(theta, obs, &cache);
  return net_.backward(theta, cache, coeff.transpose());
}

nlohmann::json mlp_params_to_json(const Mlp& net, const Eigen::VectorXd& theta) {
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 0; l < net.layers(); ++l) {
    const auto w = net.weight(theta, l);
    const auto b = net.bias(theta, l);
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      rows.push_back(std::vector<double>(w.row(r).begin(), w.row(r).end()));
    }
    layers.push_back({{"shape", {w.rows(), w.cols()}},
                      {"weight", std::move(rows)},
                      {"bias", std::vector<double>(b.begin(), b.end())}});
  }
  return layers;
}

Eigen::VectorXd mlp_params_from_json(const Mlp& net, const nlohmann::json& j) {
  if (static_cast<int>(j.size()) != net.layers()) {
    throw std::invalid_argument("checkpoint layer count mismatch");
  }
  Eigen::VectorXd theta(net.param_count());
  int offset = 0;
  for (int l = 0; l < net.layers(); ++l) {
    const auto& layer = j.at(l);
    const auto rows = layer.at("shape").at(0).get<Eigen::Index>();
    const auto cols = layer.at("shape").at(1).get<Eigen::Index>();
    const auto expected = net.weight(theta, l);
    if (rows != expected.rows() || cols != expected.cols()) {
      throw std::invalid_argument("checkpoint tensor shape mismatch");
    }
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        w(r, c) = layer.at("weight").at(r).at(c).get<double>();
      }
    }
    Eigen::Map<Eigen::MatrixXd>(theta.data() + offset, rows, cols) = w;
    offset += static_cast<int>(rows * cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      theta[offset + r] = layer.at("bias").at(r).get<double>();
    }
    offset += static_cast<int>(rows);
  }
  return theta;
}

AdamState::AdamState(int n, double learning_rate)
    : lr(learning_rate),
      m(Eigen::VectorXd::Zero(n)),
      v(Eigen::VectorXd::Zero(n)) {
  if (n < 1) throw std::invalid_argument("empty parameter vector");
  if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
}

void AdamState::apply(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (params.size() != m.size() || grad.size() != m.size()) {
    throw std::invalid_argument("adam shape mismatch");
  }
  if (!grad.allFinite()) {
    throw std::invalid_argument("non-finite gradient");
  }
  ++step;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  params.array() -=
      lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

}  // namespace geppo
