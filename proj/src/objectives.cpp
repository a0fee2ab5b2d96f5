#include "toppo/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "toppo/autodiff.hpp"

namespace toppo {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

void validate_batch(const UpdateBatch& batch, const PolicyParams& live) {
  int b = batch.size();
  if (b == 0) throw std::invalid_argument("loss: empty batch");
  if (batch.obs.cols() != live.obs_dim)
    throw std::invalid_argument("loss: observation dimension mismatch");
  if (live.family == ActionFamily::Categorical) {
    if (static_cast<int>(batch.actions.size()) != b)
      throw std::invalid_argument("loss: action count mismatch");
  } else {
    if (batch.actions_cont.rank() != 2 || batch.actions_cont.rows() != b ||
        batch.actions_cont.cols() != live.act_dim)
      throw std::invalid_argument("loss: continuous action shape mismatch");
  }
  if (static_cast<int>(batch.behavior_log_probs.size()) != b ||
      static_cast<int>(batch.advantages.size()) != b)
    throw std::invalid_argument("loss: per-sample field size mismatch");
}

// Anchor log densities for the visited actions, via the gradient-free path.
std::vector<double> anchor_log_probs(const PolicyParams& anchor,
                                     const UpdateBatch& batch) {
  std::vector<ActionDistribution> dists =
      policy_distributions(anchor, batch.obs);
  int b = batch.size();
  std::vector<double> out(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    if (anchor.family == ActionFamily::Categorical) {
      out[static_cast<std::size_t>(i)] =
          log_prob(dists[static_cast<std::size_t>(i)], batch.actions[static_cast<std::size_t>(i)]);
    } else {
      std::vector<double> a(static_cast<std::size_t>(anchor.act_dim));
      for (int d = 0; d < anchor.act_dim; ++d)
        a[static_cast<std::size_t>(d)] = batch.actions_cont.at(i, d);
      out[static_cast<std::size_t>(i)] = log_prob(dists[static_cast<std::size_t>(i)], a);
    }
  }
  return out;
}

std::vector<ActionDistribution> live_dists_from_head(const PolicyParams& live,
                                                     const Tensor& head) {
  int b = head.rows();
  std::vector<ActionDistribution> out(static_cast<std::size_t>(b));
  if (live.family == ActionFamily::Categorical) {
    Tensor logp;
    kernels::log_softmax(head, logp);
    for (int r = 0; r < b; ++r) {
      ActionDistribution& d = out[static_cast<std::size_t>(r)];
      d.family = ActionFamily::Categorical;
      d.log_probs.resize(static_cast<std::size_t>(live.act_dim));
      d.probs.resize(static_cast<std::size_t>(live.act_dim));
      for (int a = 0; a < live.act_dim; ++a) {
        d.log_probs[static_cast<std::size_t>(a)] = logp.at(r, a);
        d.probs[static_cast<std::size_t>(a)] = std::exp(logp.at(r, a));
      }
    }
  } else {
    for (int r = 0; r < b; ++r) {
      ActionDistribution& d = out[static_cast<std::size_t>(r)];
      d.family = ActionFamily::Gaussian;
      d.mean.resize(static_cast<std::size_t>(live.act_dim));
      d.log_std.resize(static_cast<std::size_t>(live.act_dim));
      for (int a = 0; a < live.act_dim; ++a) {
        d.mean[static_cast<std::size_t>(a)] = head.at(r, a);
        d.log_std[static_cast<std::size_t>(a)] = live.log_std.data[a];
      }
    }
  }
  return out;
}

// Shared clipped-surrogate machinery. The three policy losses differ only
// in how the bounds vector is built and which distributions feed the KL
// diagnostic.
LossBreakdown clipped_surrogate(const PolicyParams& live,
                                const UpdateBatch& batch, const ClipBounds& cb,
                                const std::vector<ActionDistribution>& ref_dists,
                                double entropy_coef,
                                std::vector<Tensor>& grads) {
  validate_batch(batch, live);
  int b = batch.size();

  LossBreakdown out;
  std::vector<double> mask(static_cast<std::size_t>(b), 1.0);
  int included = 0;
  for (int i = 0; i < b; ++i) {
    if (std::exp(batch.behavior_log_probs[static_cast<std::size_t>(i)]) == 0.0)
      mask[static_cast<std::size_t>(i)] = 0.0;
    else
      included += 1;
  }
  out.excluded_samples = b - included;

  Tensor lo = Tensor::vec(cb.lo);
  Tensor hi = Tensor::vec(cb.hi);
  for (int i = 0; i < b; ++i) {
    if (mask[static_cast<std::size_t>(i)] == 0.0) {
      lo.data[static_cast<std::size_t>(i)] = 1.0 - cb.epsilon;
      hi.data[static_cast<std::size_t>(i)] = 1.0 + cb.epsilon;
    }
  }

  ad::Tape tape;
  std::vector<ad::Var> param_vars;
  ad::Var obs = tape.constant(batch.obs);
  ad::Var head = policy_head_graph(tape, live, obs, param_vars);

  ad::Var logp;
  ad::Var entropy_node;
  if (live.family == ActionFamily::Categorical) {
    ad::Var y = tape.log_softmax(head);
    logp = tape.gather_rows(y, batch.actions);
    // mean over the batch of -sum_a p * log p
    ad::Var p = tape.exp(y);
    ad::Var plogp = tape.mul(p, y);
    entropy_node = tape.mul_scalar(tape.sum(plogp), -1.0 / b);
  } else {
    ad::Var log_std_var = param_vars.back();
    logp = tape.gaussian_log_prob(head, log_std_var, batch.actions_cont);
    entropy_node = tape.add_scalar(
        tape.sum(log_std_var), 0.5 * live.act_dim * (kLogTwoPi + 1.0));
  }

  ad::Var mask_c = tape.constant(Tensor::vec(mask));
  ad::Var blp_c = tape.constant(Tensor::vec(batch.behavior_log_probs));
  ad::Var adv_c = tape.constant(Tensor::vec(batch.advantages));
  ad::Var diff = tape.mul(tape.sub(logp, blp_c), mask_c);
  ad::Var ratio = tape.exp(diff);
  ad::Var surr_raw = tape.mul(ratio, adv_c);
  ad::Var clipped = tape.clip(ratio, lo, hi);
  ad::Var surr_clip = tape.mul(clipped, adv_c);
  ad::Var per_sample = tape.mul(tape.min(surr_raw, surr_clip), mask_c);
  ad::Var objective =
      tape.mul_scalar(tape.sum(per_sample), 1.0 / std::max(included, 1));
  ad::Var total = tape.add(objective, tape.mul_scalar(entropy_node, entropy_coef));

  tape.backward(total);

  grads.clear();
  for (ad::Var pv : param_vars) grads.push_back(tape.grad(pv));

  out.policy_objective = tape.value(objective).data[0];
  out.entropy = tape.value(entropy_node).data[0];

  const Tensor& ratio_v = tape.value(ratio);
  int clipped_count = 0;
  for (int i = 0; i < b; ++i) {
    if (mask[static_cast<std::size_t>(i)] == 0.0) continue;
    double r = ratio_v.data[static_cast<std::size_t>(i)];
    if (r < lo.data[static_cast<std::size_t>(i)] ||
        r > hi.data[static_cast<std::size_t>(i)])
      clipped_count += 1;
  }
  out.clip_fraction =
      included > 0 ? static_cast<double>(clipped_count) / included : 0.0;

  std::vector<ActionDistribution> live_dists =
      live_dists_from_head(live, tape.value(head));
  double kl_acc = 0.0;
  for (int i = 0; i < b; ++i)
    kl_acc += kl_divergence(ref_dists[static_cast<std::size_t>(i)],
                            live_dists[static_cast<std::size_t>(i)]);
  out.mean_kl = kl_acc / b;
  return out;
}

ClipBounds bounds_from_anchor(const UpdateBatch& batch,
                              const PolicyParams& anchor, double epsilon,
                              bool floor_at_zero) {
  std::vector<double> alp = anchor_log_probs(anchor, batch);
  int b = batch.size();
  ClipBounds cb;
  cb.epsilon = epsilon;
  cb.lo.resize(static_cast<std::size_t>(b));
  cb.hi.resize(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    double anchor_ratio = std::exp(
        alp[static_cast<std::size_t>(i)] -
        batch.behavior_log_probs[static_cast<std::size_t>(i)]);
    double lo = anchor_ratio - epsilon;
    if (floor_at_zero && lo < 0.0) lo = 0.0;
    double hi = anchor_ratio + epsilon;
    if (floor_at_zero) {
      if (lo < 0.0 || lo > hi || hi - lo > 2.0 * epsilon + 1e-12)
        throw std::logic_error("clip bounds violate their invariants");
    }
    cb.lo[static_cast<std::size_t>(i)] = lo;
    cb.hi[static_cast<std::size_t>(i)] = hi;
  }
  return cb;
}

}  // namespace

ClipBounds toppo_bounds(const UpdateBatch& batch, const PolicyParams& anchor,
                        double epsilon) {
  return bounds_from_anchor(batch, anchor, epsilon, true);
}

ClipBounds geppo_bounds(const UpdateBatch& batch, const PolicyParams& anchor,
                        double epsilon) {
  return bounds_from_anchor(batch, anchor, epsilon, false);
}

LossBreakdown toppo_loss(const PolicyParams& live, const UpdateBatch& batch,
                         const PolicyParams& anchor, double epsilon,
                         double entropy_coef, std::vector<Tensor>& grads) {
  validate_batch(batch, live);
  ClipBounds cb = toppo_bounds(batch, anchor, epsilon);
  std::vector<ActionDistribution> anchor_dists =
      policy_distributions(anchor, batch.obs);
  return clipped_surrogate(live, batch, cb, anchor_dists, entropy_coef, grads);
}

LossBreakdown ppo_loss(const PolicyParams& live, const UpdateBatch& batch,
                       double epsilon, double entropy_coef,
                       std::vector<Tensor>& grads) {
  validate_batch(batch, live);
  int b = batch.size();
  ClipBounds cb;
  cb.epsilon = epsilon;
  cb.lo.assign(static_cast<std::size_t>(b), 1.0 - epsilon);
  cb.hi.assign(static_cast<std::size_t>(b), 1.0 + epsilon);
  if (batch.behavior_dists.size() != static_cast<std::size_t>(b))
    throw std::invalid_argument("ppo_loss: behavior distributions missing");
  return clipped_surrogate(live, batch, cb, batch.behavior_dists, entropy_coef,
                           grads);
}

LossBreakdown geppo_loss(const PolicyParams& live, const UpdateBatch& batch,
                         const PolicyParams& anchor, double epsilon,
                         double entropy_coef, std::vector<Tensor>& grads) {
  validate_batch(batch, live);
  ClipBounds cb = geppo_bounds(batch, anchor, epsilon);
  std::vector<ActionDistribution> anchor_dists =
      policy_distributions(anchor, batch.obs);
  return clipped_surrogate(live, batch, cb, anchor_dists, entropy_coef, grads);
}

double value_loss(const ValueParams& value, const UpdateBatch& batch,
                  std::vector<Tensor>& grads) {
  int b = batch.size();
  if (b == 0) throw std::invalid_argument("value_loss: empty batch");
  if (static_cast<int>(batch.value_targets.size()) != b)
    throw std::invalid_argument("value_loss: target count mismatch");
  ad::Tape tape;
  std::vector<ad::Var> param_vars;
  ad::Var obs = tape.constant(batch.obs);
  ad::Var pred = value_graph(tape, value, obs, param_vars);
  Tensor target = Tensor::zeros({b, 1});
  for (int i = 0; i < b; ++i)
    target.at(i, 0) = batch.value_targets[static_cast<std::size_t>(i)];
  ad::Var mse = tape.mean(tape.square(tape.sub(pred, tape.constant(target))));
  tape.backward(mse);
  grads.clear();
  for (ad::Var pv : param_vars) grads.push_back(tape.grad(pv));
  return tape.value(mse).data[0];
}

}  // namespace toppo
