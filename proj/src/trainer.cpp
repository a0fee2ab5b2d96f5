#include "toppo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>

#include "toppo/autodiff.hpp"
#include "toppo/envs.hpp"
#include "toppo/estimators.hpp"
#include "toppo/objectives.hpp"
#include "toppo/rng.hpp"

namespace toppo {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("config: batch_size < 1");
  if (minibatches < 1) throw std::invalid_argument("config: minibatches < 1");
  if (batch_size % minibatches != 0)
    throw std::invalid_argument(
        "config: batch_size not divisible by minibatches");
  if (epochs < 1) throw std::invalid_argument("config: epochs < 1");
  if (gamma <= 0.0 || gamma >= 1.0)
    throw std::invalid_argument("config: gamma outside (0, 1)");
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("config: lambda outside [0, 1]");
  if (epsilon_base <= 0.0 || epsilon_fixed <= 0.0)
    throw std::invalid_argument("config: clip width must be positive");
  if (buffer_capacity < 1) throw std::invalid_argument("config: N < 1");
  if (alpha < 0.0) throw std::invalid_argument("config: negative alpha");
  if (learning_rate < 0.0)
    throw std::invalid_argument("config: negative learning rate");
  if (early_stop_kl <= 0.0)
    throw std::invalid_argument("config: early_stop_kl must be positive");
  if (total_timesteps < batch_size)
    throw std::invalid_argument("config: budget smaller than one batch");
  if (hidden < 1) throw std::invalid_argument("config: hidden < 1");
  if (eval_every < 1 || eval_episodes < 1)
    throw std::invalid_argument("config: evaluation cadence invalid");
}

double TrainConfig::resolved_entropy_coef(ActionFamily family) const {
  if (entropy_coef >= 0.0) return entropy_coef;
  return family == ActionFamily::Categorical ? 0.01 : 0.0;
}

bool early_stop(double mean_kl, double threshold) {
  if (mean_kl < 0.0) throw std::invalid_argument("early_stop: negative KL");
  return mean_kl > threshold;
}

namespace {

enum class Algo { Toppo, Ppo, Geppo };

struct Collector {
  std::unique_ptr<Env> env;
  std::mt19937_64 rng;
  std::vector<double> obs;
  double episode_return_acc = 0.0;
  bool episode_open = false;
};

// Collect exactly n steps, continuing any episode left open by the previous
// iteration. The final slice is cut at the batch boundary and bootstrapped.
RolloutBatch collect_batch(Collector& c, const PolicyParams& policy,
                           const ValueParams& value, int n,
                           std::uint64_t snapshot_id,
                           std::vector<double>& finished_returns) {
  RolloutBatch batch;
  batch.snapshot_id = snapshot_id;

  if (!c.episode_open) {
    c.obs = c.env->reset(c.rng);
    c.episode_return_acc = 0.0;
    c.episode_open = true;
  }

  EpisodeSlice slice;
  for (int t = 0; t < n; ++t) {
    Transition tr;
    tr.obs = c.obs;
    ActionDistribution dist = policy_distribution(policy, c.obs);
    StepResult sr;
    if (policy.family == ActionFamily::Categorical) {
      tr.action = sample_action(dist, c.rng);
      tr.behavior_log_prob = log_prob(dist, tr.action);
      sr = c.env->step(tr.action, c.rng);
    } else {
      tr.action_vec = sample_action_vec(dist, c.rng);
      tr.behavior_log_prob = log_prob(dist, tr.action_vec);
      sr = c.env->step(tr.action_vec, c.rng);
    }
    tr.behavior_dist = std::move(dist);
    tr.value_pred = value_predict(value, c.obs);
    tr.reward = sr.reward;
    slice.steps.push_back(std::move(tr));
    slice.episode_return += sr.reward;
    c.episode_return_acc += sr.reward;
    c.obs = sr.obs;

    if (sr.terminated || sr.truncated) {
      slice.final_obs = sr.obs;
      slice.truncated = sr.truncated && !sr.terminated;
      slice.bootstrap_value =
          slice.truncated ? value_predict(value, sr.obs) : 0.0;
      slice.complete = true;
      finished_returns.push_back(c.episode_return_acc);
      batch.episodes.push_back(std::move(slice));
      slice = EpisodeSlice{};
      if (t + 1 < n) {
        c.obs = c.env->reset(c.rng);
        c.episode_return_acc = 0.0;
      } else {
        c.episode_open = false;
      }
    } else if (t + 1 == n) {
      // batch boundary: cut the episode, keep it running next iteration
      slice.final_obs = c.obs;
      slice.truncated = true;
      slice.bootstrap_value = value_predict(value, c.obs);
      slice.complete = false;
      batch.episodes.push_back(std::move(slice));
    }
  }
  return batch;
}

struct FlatSample {
  const Transition* tr;
};

std::vector<FlatSample> flatten(const RolloutBatch& a, const RolloutBatch& b) {
  std::vector<FlatSample> out;
  for (const RolloutBatch* rb : {&a, &b})
    for (const EpisodeSlice& ep : rb->episodes)
      for (const Transition& t : ep.steps) out.push_back(FlatSample{&t});
  return out;
}

UpdateBatch gather_minibatch(const std::vector<FlatSample>& flat,
                             const std::vector<int>& order, int begin, int end,
                             ActionFamily family, int obs_dim, int act_dim) {
  UpdateBatch mb;
  int b = end - begin;
  mb.obs = Tensor::zeros({b, obs_dim});
  mb.behavior_log_probs.resize(static_cast<std::size_t>(b));
  mb.behavior_dists.resize(static_cast<std::size_t>(b));
  mb.advantages.resize(static_cast<std::size_t>(b));
  mb.value_targets.resize(static_cast<std::size_t>(b));
  if (family == ActionFamily::Categorical)
    mb.actions.resize(static_cast<std::size_t>(b));
  else
    mb.actions_cont = Tensor::zeros({b, act_dim});
  for (int i = 0; i < b; ++i) {
    const Transition& t = *flat[static_cast<std::size_t>(
                                    order[static_cast<std::size_t>(begin + i)])]
                               .tr;
    for (int d = 0; d < obs_dim; ++d)
      mb.obs.at(i, d) = t.obs[static_cast<std::size_t>(d)];
    mb.behavior_log_probs[static_cast<std::size_t>(i)] = t.behavior_log_prob;
    mb.behavior_dists[static_cast<std::size_t>(i)] = t.behavior_dist;
    mb.advantages[static_cast<std::size_t>(i)] = t.advantage;
    mb.value_targets[static_cast<std::size_t>(i)] = t.value_target;
    if (family == ActionFamily::Categorical)
      mb.actions[static_cast<std::size_t>(i)] = t.action;
    else
      for (int d = 0; d < act_dim; ++d)
        mb.actions_cont.at(i, d) = t.action_vec[static_cast<std::size_t>(d)];
  }
  return mb;
}

void apply_gradients(std::vector<Tensor*> params, std::vector<Tensor>& grads,
                     ad::AdamState& state, bool ascend) {
  if (ascend)
    for (Tensor& g : grads)
      for (double& x : g.data) x = -x;
  ad::adam_step(params, grads, state);
}

TrainResult run_training(const TrainConfig& config, Algo algo) {
  config.validate();

  RngSplitter splitter(config.seed);
  std::unique_ptr<Env> env = make_env(config.env_id);
  const EnvSpec spec = env->spec();

  std::mt19937_64 init_rng = splitter.stream("init");
  PolicyParams policy = make_policy(spec.family, spec.obs_dim,
                                    spec.family == ActionFamily::Categorical
                                        ? spec.num_actions
                                        : spec.act_dim,
                                    config.hidden, config.hidden, init_rng);
  ValueParams value =
      make_value(spec.obs_dim, config.hidden, config.hidden, init_rng);

  Collector collector;
  collector.env = std::move(env);
  collector.rng = splitter.stream("env");
  std::mt19937_64 shuffle_rng = splitter.stream("minibatch-shuffle");
  std::mt19937_64 buffer_rng = splitter.stream("buffer-sampling");

  int capacity = algo == Algo::Ppo ? 1 : config.buffer_capacity;
  PolicySet set(capacity, config.alpha);
  EpsilonSchedule sched;
  sched.mode = config.adaptive_epsilon ? EpsilonSchedule::Mode::Adaptive
                                       : EpsilonSchedule::Mode::Fixed;
  sched.base = config.epsilon_base;
  sched.current = config.epsilon_fixed;

  ad::AdamState policy_adam;
  policy_adam.lr = config.learning_rate;
  ad::AdamState value_adam;
  value_adam.lr = config.learning_rate;
  double entropy_coef = config.resolved_entropy_coef(spec.family);

  TrainResult result;
  long iterations = config.total_timesteps / config.batch_size;
  double last_mean_return = 0.0;

  for (long k = 0; k < iterations; ++k) {
    std::vector<double> finished;
    RolloutBatch on_batch =
        collect_batch(collector, policy, value, config.batch_size,
                      static_cast<std::uint64_t>(k), finished);
    if (!finished.empty())
      last_mean_return =
          std::accumulate(finished.begin(), finished.end(), 0.0) /
          static_cast<double>(finished.size());

    if (algo != Algo::Geppo) {
      gae(on_batch, config.gamma, config.lambda);
      normalize_advantages(on_batch);
    }
    PolicyParams anchor = policy;
    anchor.snapshot_id = static_cast<std::uint64_t>(k);
    set.insert(std::move(on_batch));

    const PolicyEntry* behavior = set.sample_behavior(buffer_rng);
    const RolloutBatch& newest = set.entries().back().batch;
    std::uint64_t behavior_id =
        behavior ? behavior->snapshot_id : newest.snapshot_id;

    RolloutBatch geppo_on, geppo_off;
    const RolloutBatch* first = &newest;
    const RolloutBatch* second = behavior ? &behavior->batch : &newest;
    if (algo == Algo::Geppo) {
      // value targets and advantages re-derived toward the current policy
      geppo_on = newest;
      refresh_value_predictions(geppo_on, value);
      vtrace(geppo_on, anchor, config.gamma, 1.0, 1.0);
      normalize_advantages(geppo_on);
      geppo_off = behavior ? behavior->batch : newest;
      refresh_value_predictions(geppo_off, value);
      vtrace(geppo_off, anchor, config.gamma, 1.0, 1.0);
      normalize_advantages(geppo_off);
      first = &geppo_on;
      second = &geppo_off;
    }

    std::vector<FlatSample> flat = flatten(*first, *second);
    int total = static_cast<int>(flat.size());
    if (total % config.minibatches != 0)
      throw std::logic_error("trainer: dataset not divisible into minibatches");
    int mb_size = total / config.minibatches;

    double eps = sched.epsilon(set.size());
    if (algo == Algo::Ppo) eps = config.epsilon_base;

    std::vector<int> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), 0);

    double pol_loss_acc = 0.0, val_loss_acc = 0.0, kl_acc = 0.0,
           clip_acc = 0.0;
    int mb_count = 0;
    std::vector<Tensor> pgrads, vgrads;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      double epoch_kl = 0.0;
      for (int m = 0; m < config.minibatches; ++m) {
        UpdateBatch mb = gather_minibatch(
            flat, order, m * mb_size, (m + 1) * mb_size, spec.family,
            spec.obs_dim, policy.act_dim);
        LossBreakdown lb;
        switch (algo) {
          case Algo::Toppo:
            lb = toppo_loss(policy, mb, anchor, eps, entropy_coef, pgrads);
            break;
          case Algo::Ppo:
            lb = ppo_loss(policy, mb, eps, entropy_coef, pgrads);
            break;
          case Algo::Geppo:
            lb = geppo_loss(policy, mb, anchor, eps, entropy_coef, pgrads);
            break;
        }
        if (!std::isfinite(lb.policy_objective))
          throw std::runtime_error("trainer: non-finite policy objective at "
                                   "iteration " +
                                   std::to_string(k));
        apply_gradients(policy.tensors(), pgrads, policy_adam, true);

        double vl = value_loss(value, mb, vgrads);
        if (!std::isfinite(vl))
          throw std::runtime_error(
              "trainer: non-finite value loss at iteration " +
              std::to_string(k));
        apply_gradients(value.tensors(), vgrads, value_adam, false);

        pol_loss_acc += -lb.policy_objective;
        val_loss_acc += vl;
        kl_acc += lb.mean_kl;
        clip_acc += lb.clip_fraction;
        epoch_kl += lb.mean_kl;
        mb_count += 1;
      }
      if (early_stop(epoch_kl / config.minibatches, config.early_stop_kl))
        break;
    }

    int deletions = 0;
    if (!config.disable_selection && algo != Algo::Geppo) {
      std::vector<SelectionRecord> log = set.select(policy);
      for (const SelectionRecord& rec : log) {
        if (rec.deleted) deletions += 1;
        result.selection_log.push_back(
            SelectionLogRow{static_cast<int>(k), rec});
      }
    }

    IterationMetrics row;
    row.iteration = static_cast<int>(k);
    row.env_steps = (k + 1) * config.batch_size;
    row.mean_episode_return = last_mean_return;
    row.policy_loss = pol_loss_acc / mb_count;
    row.value_loss = val_loss_acc / mb_count;
    row.mean_kl = kl_acc / mb_count;
    row.clip_fraction = clip_acc / mb_count;
    row.buffer_size = set.size();
    row.epsilon = eps;
    row.behavior_snapshot = behavior_id;
    row.deletions = deletions;
    result.metrics.push_back(row);

    if ((k + 1) % config.eval_every == 0) {
      std::mt19937_64 eval_rng =
          splitter.stream("eval", static_cast<std::uint64_t>(k));
      EvalRecord ev;
      ev.iteration = static_cast<int>(k);
      ev.env_steps = row.env_steps;
      ev.mean_return = evaluate_policy(policy, config.env_id,
                                       config.eval_episodes, eval_rng);
      result.evals.push_back(ev);
    }
  }

  result.final_policy = policy;
  result.final_value = value;
  return result;
}

}  // namespace

double evaluate_policy(const PolicyParams& policy, const std::string& env_id,
                       int episodes, std::mt19937_64& rng) {
  std::unique_ptr<Env> env = make_env(env_id);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    std::vector<double> obs = env->reset(rng);
    double ret = 0.0;
    while (true) {
      ActionDistribution dist = policy_distribution(policy, obs);
      StepResult sr;
      if (policy.family == ActionFamily::Categorical)
        sr = env->step(mode_action(dist), rng);
      else
        sr = env->step(mode_action_vec(dist), rng);
      ret += sr.reward;
      obs = sr.obs;
      if (sr.terminated || sr.truncated) break;
    }
    total += ret;
  }
  return total / episodes;
}

TrainResult run_toppo(const TrainConfig& config) {
  return run_training(config, Algo::Toppo);
}

TrainResult run_ppo(const TrainConfig& config) {
  return run_training(config, Algo::Ppo);
}

TrainResult run_geppo(const TrainConfig& config) {
  return run_training(config, Algo::Geppo);
}

}  // namespace toppo
