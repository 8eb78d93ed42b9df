#include "geppo/buffer.hpp"

#include <cstring>
#include <stdexcept>

#include "geppo/rng.hpp"

namespace geppo {

namespace {

std::uint64_t hash_doubles(const double* data, std::size_t n, std::uint64_t h) {
  return fnv1a({reinterpret_cast<const char*>(data), n * sizeof(double)}, h);
}

}  // namespace

std::uint64_t PolicySnapshot::checksum() const {
  std::uint64_t h = fnv1a("snapshot");
  h = hash_doubles(policy_params.data(), policy_params.size(), h);
  h = hash_doubles(normalizer.mean().data(), normalizer.mean().size(), h);
  const Eigen::VectorXd var = normalizer.variance();
  h = hash_doubles(var.data(), var.size(), h);
  const auto count = normalizer.count();
  h = fnv1a({reinterpret_cast<const char*>(&count), sizeof(count)}, h);
  const auto iter = static_cast<std::int64_t>(iteration);
  return fnv1a({reinterpret_cast<const char*>(&iter), sizeof(iter)}, h);
}

ReplayWindow::ReplayWindow(int capacity, int batch_size)
    : capacity_(capacity), batch_size_(batch_size) {
  if (capacity < 1) throw std::invalid_argument("window capacity must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
}

void ReplayWindow::push(PolicySnapshot snapshot, TrajectoryBatch batch) {
  if (static_cast<int>(batch.size()) != batch_size_) {
    throw std::invalid_argument("batch has wrong size for this window");
  }
  entries_.push_front(Entry{std::move(snapshot), std::move(batch)});
  if (static_cast<int>(entries_.size()) > capacity_) entries_.pop_back();
  for (int age = 0; age < size(); ++age) {
    for (Transition& tr : entries_[age].batch) tr.policy_age = age;
  }
}

AssembledSet AssembledSet::gather(const std::vector<int>& indices) const {
  AssembledSet out;
  const int m = static_cast<int>(indices.size());
  out.states.resize(states.rows(), m);
  out.actions.resize(actions.rows(), m);
  out.weight.resize(m);
  out.behavior_logprob.resize(m);
  out.logp_current.resize(m);
  out.advantage.resize(m);
  out.value_target.resize(m);
  out.start_q.resize(m);
  out.age.resize(m);
  for (int j = 0; j < m; ++j) {
    const int i = indices[j];
    out.states.col(j) = states.col(i);
    out.actions.col(j) = actions.col(i);
    out.weight[j] = weight[i];
    out.behavior_logprob[j] = behavior_logprob[i];
    out.logp_current[j] = logp_current[i];
    out.advantage[j] = advantage[i];
    out.value_target[j] = value_target[i];
    out.start_q[j] = start_q[i];
    out.age[j] = age[i];
  }
  return out;
}

AssembledSet assemble(const ReplayWindow& window, const Eigen::VectorXd& nu,
                      const BatchLogProb& current_logprob,
                      const BatchValue& value, const EstimatorConfig& config,
                      bool use_vtrace) {
  const int window_size = window.size();
  if (window_size == 0) throw std::invalid_argument("empty replay window");
  if (nu.size() < window_size) {
    throw std::invalid_argument("nu shorter than the replay window");
  }

  // Warmup: keep the newest window_size weights and renormalize.
  Eigen::VectorXd nu_eff = nu.head(window_size);
  nu_eff /= nu_eff.sum();

  const int n = window.batch_size();
  const int total = window_size * n;
  const TrajectoryBatch& first = window.batch(0);
  const auto obs_dim = first.front().state.size();
  const auto act_dim = first.front().action.size();

  AssembledSet set;
  set.states.resize(obs_dim, total);
  set.actions.resize(act_dim, total);
  set.weight.resize(total);
  set.behavior_logprob.resize(total);
  set.logp_current.resize(total);
  set.advantage.resize(total);
  set.value_target.resize(total);
  set.start_q.resize(total);
  set.age.resize(total);

  for (int age = 0; age < window_size; ++age) {
    const TrajectoryBatch& batch = window.batch(age);
    const int offset = age * n;

    Eigen::MatrixXd states(obs_dim, n);
    Eigen::MatrixXd next_states(obs_dim, n);
    Eigen::MatrixXd actions(act_dim, n);
    EstimationInput input;
    input.rewards.resize(n);
    input.log_ratio.resize(n);
    input.terminal.resize(n);
    input.truncated.resize(n);
    Eigen::VectorXd behavior(n);

    for (int t = 0; t < n; ++t) {
      const Transition& tr = batch[t];
      if (tr.policy_age != age) {
        throw std::logic_error("window entry carries a stale policy age");
      }
      states.col(t) = tr.state;
      next_states.col(t) = tr.next_state;
      actions.col(t) = tr.action;
      input.rewards[t] = tr.reward;
      input.terminal[t] = tr.terminal ? 1 : 0;
      input.truncated[t] = tr.truncated ? 1 : 0;
      behavior[t] = tr.behavior_logprob;
    }

    const Eigen::VectorXd logp_k = current_logprob(states, actions);
    input.log_ratio = logp_k - behavior;
    if (!input.log_ratio.allFinite()) {
      throw std::runtime_error("non-finite importance ratio in assembly");
    }
    input.values = value(states);
    input.next_values = value(next_states);

    const AdvantageBatch est =
        use_vtrace ? vtrace_targets(input, config) : gae(input, config);

    const double w = nu_eff[age] * window_size;
    for (int t = 0; t < n; ++t) {
      const int i = offset + t;
      set.states.col(i) = states.col(t);
      set.actions.col(i) = actions.col(t);
      set.weight[i] = w;
      set.behavior_logprob[i] = behavior[t];
      set.logp_current[i] = logp_k[t];
      set.advantage[i] = est.advantage[t];
      set.value_target[i] = est.value_target[t];
      set.start_q[i] = est.start_q[t];
      set.age[i] = age;
    }
  }
  return set;
}

}  // namespace geppo
