#pragma once

#include <vector>

#include "toppo/policy.hpp"
#include "toppo/tensor.hpp"

namespace toppo {

// Flattened minibatch view consumed by the loss functions. All fields are
// constants of the optimization; only the live policy carries gradients.
struct UpdateBatch {
  Tensor obs;                      // [B x obs_dim]
  std::vector<int> actions;        // categorical family
  Tensor actions_cont;             // [B x D], Gaussian family
  std::vector<double> behavior_log_probs;
  std::vector<ActionDistribution> behavior_dists;  // for KL diagnostics
  std::vector<double> advantages;
  std::vector<double> value_targets;

  int size() const { return obs.rank() == 2 ? obs.rows() : 0; }
};

// Per-sample clipping interval around the anchor ratio.
struct ClipBounds {
  std::vector<double> lo;
  std::vector<double> hi;
  double epsilon = 0.0;
};

struct LossBreakdown {
  double policy_objective = 0.0;  // clipped surrogate, to be maximized
  double value_loss = 0.0;
  double entropy = 0.0;
  double mean_kl = 0.0;  // anchor distribution against the live one
  double clip_fraction = 0.0;
  int excluded_samples = 0;
};

// Clipped surrogate with bounds centered on the anchor-to-behavior ratio,
// floored at zero. Gradients of (surrogate + entropy_coef * entropy) with
// respect to the live parameters are written to grads, aligned with
// live.tensors(). Samples whose behavior density underflows are excluded
// from the mean and counted.
LossBreakdown toppo_loss(const PolicyParams& live, const UpdateBatch& batch,
                         const PolicyParams& anchor, double epsilon,
                         double entropy_coef, std::vector<Tensor>& grads);

// Standard clipped surrogate with constant bounds 1 - epsilon, 1 + epsilon.
// Identical to toppo_loss when the batch comes from the anchor itself.
LossBreakdown ppo_loss(const PolicyParams& live, const UpdateBatch& batch,
                       double epsilon, double entropy_coef,
                       std::vector<Tensor>& grads);

// Baseline variant whose lower bound is not floored and may be negative;
// expects the batch advantages to carry importance-corrected estimates
// toward the anchor.
LossBreakdown geppo_loss(const PolicyParams& live, const UpdateBatch& batch,
                         const PolicyParams& anchor, double epsilon,
                         double entropy_coef, std::vector<Tensor>& grads);

// Mean squared error of the value network against the batch targets.
// Gradients aligned with value.tensors().
double value_loss(const ValueParams& value, const UpdateBatch& batch,
                  std::vector<Tensor>& grads);

// The clip interval each loss would use on this batch, for inspection.
ClipBounds toppo_bounds(const UpdateBatch& batch, const PolicyParams& anchor,
                        double epsilon);
ClipBounds geppo_bounds(const UpdateBatch& batch, const PolicyParams& anchor,
                        double epsilon);

}  // namespace toppo
