#pragma once

#include <cstdint>
#include <vector>

#include "toppo/policy.hpp"

namespace toppo {

// One environment transition as stored in a rollout. Either the discrete or
// the continuous action field is meaningful, depending on the policy family.
struct Transition {
  std::vector<double> obs;
  int action = -1;
  std::vector<double> action_vec;
  double reward = 0.0;
  double behavior_log_prob = 0.0;
  ActionDistribution behavior_dist;
  double value_pred = 0.0;
  double advantage = 0.0;
  double value_target = 0.0;
};

// A contiguous stretch of one episode. When the stretch ends by horizon or
// batch-boundary truncation rather than termination, the return is
// bootstrapped with bootstrap_value, the critic's estimate at final_obs.
struct EpisodeSlice {
  std::vector<Transition> steps;
  std::vector<double> final_obs;
  bool truncated = false;
  double bootstrap_value = 0.0;
  double episode_return = 0.0;  // undiscounted, complete episodes only
  bool complete = false;
};

// All data one behavior policy contributed in one iteration.
struct RolloutBatch {
  std::uint64_t snapshot_id = 0;
  std::vector<EpisodeSlice> episodes;
  bool advantages_ready = false;

  int total_steps() const;
  void validate() const;
};

// Generalized advantage estimation over every episode slice, in place.
// Requires value predictions; fills advantage and value_target (adv + V).
void gae(RolloutBatch& batch, double gamma, double lambda);

// Truncated-importance-weight value correction toward the target policy,
// using the value predictions already stored on the batch. Overwrites
// value_target and advantage on every transition.
void vtrace(RolloutBatch& batch, const PolicyParams& target, double gamma,
            double rho_bar, double c_bar);

// Replaces every stored value prediction (and truncated-slice bootstrap)
// with the given critic's outputs.
void refresh_value_predictions(RolloutBatch& batch, const ValueParams& critic);

// In-place shift-and-scale to zero mean and unit population variance,
// guarded for tiny spreads.
void normalize_advantages(RolloutBatch& batch);

}  // namespace toppo
