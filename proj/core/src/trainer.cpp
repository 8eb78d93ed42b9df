#include "geppo/trainer.hpp"
#include <cstdlib>
#include <iostream>

#include <algorithm>
#include <cmath>

#include "geppo/rng.hpp"

namespace geppo {

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "ppo") return Algorithm::ppo;
  if (s == "geppo") return Algorithm::geppo;
  if (s == "ppo_adapt") return Algorithm::ppo_adapt;
  throw std::invalid_argument("unknown algorithm: " + s);
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::ppo: return "ppo";
    case Algorithm::geppo: return "geppo";
    case Algorithm::ppo_adapt: return "ppo_adapt";
  }
  throw std::logic_error("unreachable");
}

void TrainerConfig::validate() const {
  if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
  if (n < 1 || N < 1) throw std::invalid_argument("batch sizes must be >= 1");
  if (N % n != 0) throw std::invalid_argument("N must be divisible by n");
  if (M_bar < 1) throw std::invalid_argument("M_bar must be >= 1");
  if (!(eps_ppo > 0.0 && eps_ppo < 1.0)) {
    throw std::invalid_argument("eps_ppo must lie in (0, 1)");
  }
  if (minibatches < 1 || epochs < 1) {
    throw std::invalid_argument("minibatches and epochs must be >= 1");
  }
  if (eval_episodes < 1) {
    throw std::invalid_argument("eval_episodes must be >= 1");
  }
  if (!(eta0 > 0.0) || !(value_lr > 0.0)) {
    throw std::invalid_argument("learning rates must be positive");
  }
  if (!(init_std_multiple > 0.0)) {
    throw std::invalid_argument("init_std_multiple must be positive");
  }
  EstimatorConfig est;
  est.gamma = gamma;
  est.lambda = lambda;
  est.c_bar = c_bar;
  est.validate();
}

TrainerConfig::Resolved TrainerConfig::resolve() const {
  validate();
  Resolved r;
  r.B = N / n;
  if (algorithm == Algorithm::geppo) {
    switch (weight_program) {
      case WeightProgram::essopt:
        r.weights = solve_essopt(r.B, M_bar);
        break;
      case WeightProgram::tvopt:
        r.weights = solve_tvopt(r.B, M_bar);
        break;
      case WeightProgram::uniform:
        r.weights = uniform_weights(std::min(2 * r.B - 1, M_bar));
        break;
    }
    r.epsilon = epsilon_mapping(r.weights, eps_ppo);
    r.batch_per_iter = n;
    r.window_capacity = r.weights.M;
    r.generalized = true;
    r.adaptive_lr = true;
    r.vtrace = true;
  } else {
    r.weights = uniform_weights(1);
    r.epsilon = eps_ppo;
    r.batch_per_iter = N;
    r.window_capacity = 1;
    r.generalized = false;
    r.adaptive_lr = algorithm == Algorithm::ppo_adapt;
    r.vtrace = false;
  }
  return r;
}

nlohmann::json TrainerConfig::to_json() const {
  return {{"algorithm", to_string(algorithm)},
          {"env", to_string(env)},
          {"seed", seed},
          {"total_steps", total_steps},
          {"n", n},
          {"N", N},
          {"M_bar", M_bar},
          {"eps_ppo", eps_ppo},
          {"gamma", gamma},
          {"lambda", lambda},
          {"c_bar", c_bar},
          {"alpha", alpha},
          {"beta", beta},
          {"eta0", eta0},
          {"value_lr", value_lr},
          {"minibatches", minibatches},
          {"epochs", epochs},
          {"weight_program", to_string(weight_program)},
          {"hidden", hidden},
          {"init_std_multiple", init_std_multiple},
          {"eval_episodes", eval_episodes},
          {"tv_mode", tv_mode == TvMode::post_update ? "post_update"
                                                     : "minibatch_avg"}};
}

TrainerConfig TrainerConfig::from_json(const nlohmann::json& j) {
  TrainerConfig c;
  const auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) {
      field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    }
  };
  if (j.contains("algorithm")) {
    c.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
  }
  if (j.contains("env")) c.env = env_from_string(j.at("env").get<std::string>());
  get("seed", c.seed);
  get("total_steps", c.total_steps);
  get("n", c.n);
  get("N", c.N);
  get("M_bar", c.M_bar);
  get("eps_ppo", c.eps_ppo);
  get("gamma", c.gamma);
  get("lambda", c.lambda);
  get("c_bar", c.c_bar);
  get("alpha", c.alpha);
  get("beta", c.beta);
  get("eta0", c.eta0);
  get("value_lr", c.value_lr);
  get("minibatches", c.minibatches);
  get("epochs", c.epochs);
  if (j.contains("weight_program")) {
    c.weight_program =
        weight_program_from_string(j.at("weight_program").get<std::string>());
  }
  get("hidden", c.hidden);
  get("init_std_multiple", c.init_std_multiple);
  get("eval_episodes", c.eval_episodes);
  if (j.contains("tv_mode")) {
    const auto mode = j.at("tv_mode").get<std::string>();
    if (mode == "post_update") {
      c.tv_mode = TvMode::post_update;
    } else if (mode == "minibatch_avg") {
      c.tv_mode = TvMode::minibatch_avg;
    } else {
      throw std::invalid_argument("unknown tv_mode: " + mode);
    }
  }
  c.validate();
  return c;
}

nlohmann::json UpdateReport::to_json() const {
  return {{"iter", iter},
          {"steps", steps},
          {"eval_return", eval_return},
          {"tv_hat", tv_hat},
          {"eta", eta},
          {"clip_frac", clip_frac},
          {"loss", loss}};
}

UpdateReport UpdateReport::from_json(const nlohmann::json& j) {
  UpdateReport r;
  r.iter = j.at("iter").get<int>();
  r.steps = j.at("steps").get<std::int64_t>();
  r.eval_return = j.at("eval_return").get<double>();
  r.tv_hat = j.at("tv_hat").get<double>();
  r.eta = j.at("eta").get<double>();
  r.clip_frac = j.at("clip_frac").get<double>();
  r.loss = j.at("loss").get<double>();
  return r;
}

namespace {

std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = n - 1; i > 0; --i) {
    std::swap(idx[i], idx[rng.uniform_int(0, i)]);
  }
  return idx;
}

}  // namespace

Trainer::Trainer(TrainerConfig config)
    : config_(std::move(config)),
      resolved_(config_.resolve()),
      env_(make_env(config_.env)),
      policy_(env_->spec().obs_dim, config_.hidden, env_->spec().act_dim),
      value_(env_->spec().obs_dim, config_.hidden),
      normalizer_(env_->spec().obs_dim),
      policy_adam_(policy_.param_count(), config_.eta0),
      value_adam_(value_.param_count(), config_.value_lr),
      window_(resolved_.window_capacity, resolved_.batch_per_iter) {
  estimator_.gamma = config_.gamma;
  estimator_.lambda = config_.lambda;
  estimator_.c_bar = config_.c_bar;

  Rng init_rng(derive_seed(config_.seed, "init"));
  policy_params_ = policy_.init_params(init_rng, env_->spec().action_low,
                                       env_->spec().action_high,
                                       config_.init_std_multiple);
  value_params_ = value_.init_params(init_rng);

  lr_.eta = config_.eta0;
  lr_.alpha = config_.alpha;
  lr_.beta = config_.beta;
  lr_.epsilon = resolved_.epsilon;
}

double Trainer::evaluate(std::uint64_t stream_index) const {
  Rng rng(derive_seed(config_.seed, "eval", stream_index));
  auto env = make_env(config_.env);
  double total = 0.0;
  for (int ep = 0; ep < config_.eval_episodes; ++ep) {
    Eigen::VectorXd obs = env->reset(rng);
    bool done = false;
    double episode_return = 0.0;
    while (!done) {
      const Eigen::VectorXd action =
          policy_.mean_action(policy_params_, normalizer_.transform(obs));
      const StepResult sr = env->step(action);
      episode_return += sr.reward;
      obs = sr.next_obs;
      done = sr.terminal || sr.truncated;
    }
    total += episode_return;
  }
  return total / config_.eval_episodes;
}

UpdateReport Trainer::iterate() {
  if (!policy_params_.allFinite() || !value_params_.allFinite()) {
    throw DivergenceError("non-finite parameters");
  }
  // Collect one batch with pi_k. Normalizer statistics are frozen for the
  // whole iteration so the stored behavior log-probs stay exact densities of
  // the snapshot policy.
  Rng rollout_rng(derive_seed(config_.seed, "rollout", iter_));
  const Agent agent = [&](const Eigen::VectorXd& raw, Rng& rng) {
    const Eigen::VectorXd obs = normalizer_.transform(raw);
    AgentAction act;
    act.action = policy_.sample(policy_params_, obs, rng);
    act.logprob = policy_.logprob(policy_params_, obs, act.action);
    return act;
  };
  TrajectoryBatch batch =
      rollout(agent, *env_, resolved_.batch_per_iter, rollout_rng);
  steps_done_ += static_cast<std::int64_t>(batch.size());

  window_.push(PolicySnapshot{iter_, policy_params_, normalizer_},
               std::move(batch));

  // Recompute log pi_k sample by sample through the same code path the
  // rollout used, so age-0 entries reproduce their stored behavior log-probs
  // bit for bit (batched GEMM accumulates in a different order).
  const BatchLogProb logp_fn = [&](const Eigen::MatrixXd& states,
                                   const Eigen::MatrixXd& actions) {
    Eigen::VectorXd out(states.cols());
    for (Eigen::Index i = 0; i < states.cols(); ++i) {
      out[i] = policy_.logprob(
          policy_params_,
          normalizer_.transform(Eigen::VectorXd(states.col(i))),
          actions.col(i));
    }
    return out;
  };
  const BatchValue value_fn = [&](const Eigen::MatrixXd& states) {
    return value_.forward_batch(value_params_, normalizer_.transform(states));
  };
  const AssembledSet set = assemble(window_, resolved_.weights.nu, logp_fn,
                                    value_fn, estimator_, resolved_.vtrace);

  const ClipConfig clip{resolved_.epsilon};
  policy_adam_.lr = lr_.eta;

  Rng shuffle_rng(derive_seed(config_.seed, "shuffle", iter_));
  const int total = set.count();
  double loss_sum = 0.0;
  double clip_sum = 0.0;
  double tv_minibatch_sum = 0.0;
  int update_count = 0;

  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    const std::vector<int> perm = shuffled_indices(total, shuffle_rng);
    for (int mb = 0; mb < config_.minibatches; ++mb) {
      const int begin = static_cast<int>(
          static_cast<std::int64_t>(mb) * total / config_.minibatches);
      const int end = static_cast<int>(
          static_cast<std::int64_t>(mb + 1) * total / config_.minibatches);
      if (end <= begin) continue;
      const std::vector<int> slice(perm.begin() + begin, perm.begin() + end);
      const AssembledSet sub = set.gather(slice);
      const Eigen::MatrixXd X = normalizer_.transform(sub.states);

      const StandardizeResult q = standardize_starting_point(sub.start_q);

      const Eigen::VectorXd logp =
          policy_.logprob_batch(policy_params_, X, sub.actions);
      const MinibatchLoss ml = geppo_minibatch_loss(
          logp, sub.logp_current, sub.behavior_logprob, q.values, sub.weight,
          clip, resolved_.generalized);
      const Eigen::VectorXd policy_grad =
          policy_.weighted_logprob_grad(policy_params_, X, sub.actions,
                                        ml.dlogp);
      if (!policy_grad.allFinite()) {
        throw DivergenceError("non-finite policy gradient");
      }
      policy_adam_.apply(policy_params_, -policy_grad);  // gradient ascent
      policy_.clamp_log_std(policy_params_);

      const Eigen::VectorXd v = value_.forward_batch(value_params_, X);
      const Eigen::VectorXd residual = v - sub.value_target;
      const Eigen::VectorXd coeff =
          2.0 * sub.weight.cwiseProduct(residual) / double(residual.size());
      const Eigen::VectorXd value_grad =
          value_.weighted_grad(value_params_, X, coeff);
      if (!value_grad.allFinite()) {
        throw DivergenceError("non-finite value gradient");
      }
      value_adam_.apply(value_params_, value_grad);

      loss_sum += ml.value;
      clip_sum += ml.clip_fraction;
      ++update_count;

      if (config_.tv_mode == TvMode::minibatch_avg) {
        const Eigen::VectorXd logp_post =
            policy_.logprob_batch(policy_params_, X, sub.actions);
        tv_minibatch_sum += tv_estimate(logp_post, sub.logp_current,
                                        sub.behavior_logprob, sub.weight);
      }
    }
  }

  if (std::getenv("GEPPO_DEBUG_ITER")) {
    const Eigen::VectorXd logp_post = policy_.logprob_batch(
        policy_params_, normalizer_.transform(set.states), set.actions);
    double grad_norm = 0.0;
    {
      const StandardizeResult q = standardize_starting_point(set.start_q);
      const MinibatchLoss ml = geppo_minibatch_loss(
          logp_post, set.logp_current, set.behavior_logprob, q.values,
          set.weight, clip, resolved_.generalized);
      grad_norm = policy_
                      .weighted_logprob_grad(policy_params_,
                                             normalizer_.transform(set.states),
                                             set.actions, ml.dlogp)
                      .norm();
      std::cerr << "iter=" << iter_ << " adv|mean|="
                << set.advantage.cwiseAbs().mean()
                << " q|mean|=" << set.start_q.cwiseAbs().mean()
                << " qstd_degenerate=" << q.degenerate
                << " rejected=" << ml.rejected << " grad_norm=" << grad_norm
                << " log_std=" << policy_.log_std(policy_params_).transpose()
                << " ratio_max=" << (logp_post - set.behavior_logprob).maxCoeff()
                << " ratio_min=" << (logp_post - set.behavior_logprob).minCoeff()
                << "\n";
    }
  }

  double tv_hat;
  if (config_.tv_mode == TvMode::post_update) {
    const Eigen::VectorXd logp_post = policy_.logprob_batch(
        policy_params_, normalizer_.transform(set.states), set.actions);
    tv_hat = tv_estimate(logp_post, set.logp_current, set.behavior_logprob,
                         set.weight);
  } else {
    tv_hat = tv_minibatch_sum / update_count;
  }

  if (resolved_.adaptive_lr) lr_update(lr_, tv_hat);

  UpdateReport report;
  report.iter = iter_;
  report.steps = steps_done_;
  report.tv_hat = tv_hat;
  report.eta = lr_.eta;
  report.clip_frac = clip_sum / update_count;
  report.loss = loss_sum / update_count;
  report.eval_return = evaluate(static_cast<std::uint64_t>(iter_));

  // The running statistics absorb this batch only now, after the update, so
  // the whole iteration saw one consistent observation transform.
  for (const Transition& tr : window_.batch(0)) normalizer_.update(tr.state);

  if (!policy_params_.allFinite() || !value_params_.allFinite() ||
      !std::isfinite(report.loss)) {
    throw DivergenceError("non-finite parameters or loss");
  }

  ++iter_;
  return report;
}

TrainResult Trainer::run(std::ostream* metrics) {
  TrainResult result;
  try {
    while (steps_done_ < config_.total_steps) {
      const UpdateReport report = iterate();
      result.reports.push_back(report);
      if (metrics) *metrics << report.to_json().dump() << '\n';
    }
  } catch (const DivergenceError&) {
    result.diverged = true;
    result.diverged_iter = iter_;
  }
  result.policy_params = policy_params_;
  result.value_params = value_params_;
  return result;
}

nlohmann::json Trainer::checkpoint() const {
  Eigen::VectorXd log_std = policy_.log_std(policy_params_);
  return {{"version", 1},
          {"iteration", iter_},
          {"policy",
           {{"mean_net",
             mlp_params_to_json(policy_.mean_net(),
                                policy_params_.head(
                                    policy_.mean_net().param_count()))},
            {"log_std", std::vector<double>(log_std.begin(), log_std.end())}}},
          {"value", mlp_params_to_json(value_.net(), value_params_)},
          {"normalizer", normalizer_.to_json()}};
}

void Trainer::restore(const nlohmann::json& checkpoint) {
  if (checkpoint.at("version").get<int>() != 1) {
    throw std::invalid_argument("unsupported checkpoint version");
  }
  const auto& policy = checkpoint.at("policy");
  const Eigen::VectorXd mean_params =
      mlp_params_from_json(policy_.mean_net(), policy.at("mean_net"));
  const auto log_std = policy.at("log_std").get<std::vector<double>>();
  if (static_cast<int>(log_std.size()) != policy_.act_dim()) {
    throw std::invalid_argument("checkpoint log_std dimension mismatch");
  }
  policy_params_.head(policy_.mean_net().param_count()) = mean_params;
  policy_params_.tail(policy_.act_dim()) =
      Eigen::Map<const Eigen::VectorXd>(log_std.data(), log_std.size());
  value_params_ = mlp_params_from_json(value_.net(), checkpoint.at("value"));
  normalizer_ = RunningNormalizer::from_json(checkpoint.at("normalizer"));
  iter_ = checkpoint.at("iteration").get<int>();
}

}  // namespace geppo
