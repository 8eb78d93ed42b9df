#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "geppo/env.hpp"
#include "geppo/estimation.hpp"

namespace geppo {

/// Frozen copy of a policy at collection time: parameters plus the
/// observation normalizer it acted through. Immutable after insertion.
struct PolicySnapshot {
  int iteration = 0;
  Eigen::VectorXd policy_params;
  RunningNormalizer normalizer;

  std::uint64_t checksum() const;
};

/// Ring of the last M (snapshot, batch) pairs, newest first. Every batch
/// holds exactly n transitions.
class ReplayWindow {
 public:
  ReplayWindow(int capacity, int batch_size);

  void push(PolicySnapshot snapshot, TrajectoryBatch batch);

  int size() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return capacity_; }
  int batch_size() const { return batch_size_; }

  const PolicySnapshot& snapshot(int age) const { return entries_[age].snapshot; }
  const TrajectoryBatch& batch(int age) const { return entries_[age].batch; }

 private:
  struct Entry {
    PolicySnapshot snapshot;
    TrajectoryBatch batch;
  };
  std::deque<Entry> entries_;  // front = age 0
  int capacity_;
  int batch_size_;
};

/// Flattened nu-weighted training set over the window, stored column-wise.
/// Weights realize E_{i~nu} by per-sample multipliers nu_i * M, so the
/// weighted empirical mean with base measure 1/(M n) is the mixture
/// expectation exactly.
struct AssembledSet {
  Eigen::MatrixXd states;       // obs_dim x count, raw observations
  Eigen::MatrixXd actions;      // act_dim x count
  Eigen::VectorXd weight;       // nu_age * M
  Eigen::VectorXd behavior_logprob;
  Eigen::VectorXd logp_current;  // log pi_k(a|s), recomputed at assembly
  Eigen::VectorXd advantage;
  Eigen::VectorXd value_target;
  Eigen::VectorXd start_q;      // (pi_k / behavior) * advantage
  std::vector<int> age;

  int count() const { return static_cast<int>(weight.size()); }

  /// Column-gathered copy restricted to `indices`.
  AssembledSet gather(const std::vector<int>& indices) const;
};

/// Batched callbacks supplied by the owner of the current policy and value
/// function; both receive raw observations.
using BatchLogProb =
    std::function<Eigen::VectorXd(const Eigen::MatrixXd& states,
                                  const Eigen::MatrixXd& actions)>;
using BatchValue = std::function<Eigen::VectorXd(const Eigen::MatrixXd& states)>;

/// Builds the weighted training set: recomputes current-policy log-probs,
/// estimates advantages per window entry (V-trace off-policy, plain GAE when
/// `use_vtrace` is false) and attaches ages and nu_i * M weights. During
/// warmup (window shorter than nu) nu is truncated to the newest entries and
/// renormalized.
AssembledSet assemble(const ReplayWindow& window, const Eigen::VectorXd& nu,
                      const BatchLogProb& current_logprob,
                      const BatchValue& value, const EstimatorConfig& config,
                      bool use_vtrace);

}  // namespace geppo
