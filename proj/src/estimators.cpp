#include "toppo/estimators.hpp"

#include <cmath>
#include <stdexcept>

namespace toppo {

int RolloutBatch::total_steps() const {
  int n = 0;
  for (const EpisodeSlice& e : episodes) n += static_cast<int>(e.steps.size());
  return n;
}

void RolloutBatch::validate() const {
  for (const EpisodeSlice& e : episodes) {
    if (e.steps.empty())
      throw std::invalid_argument("RolloutBatch: empty episode slice");
    if (e.truncated && e.final_obs.empty())
      throw std::invalid_argument(
          "RolloutBatch: truncated slice lacks a final observation");
    for (const Transition& t : e.steps)
      if (!std::isfinite(t.behavior_log_prob))
        throw std::invalid_argument(
            "RolloutBatch: non-finite behavior log density");
  }
}

void gae(RolloutBatch& batch, double gamma, double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("gae: lambda outside [0, 1]");
  batch.validate();
  for (EpisodeSlice& e : batch.episodes) {
    int T = static_cast<int>(e.steps.size());
    double acc = 0.0;
    for (int t = T - 1; t >= 0; --t) {
      Transition& tr = e.steps[static_cast<std::size_t>(t)];
      double next_v;
      if (t < T - 1)
        next_v = e.steps[static_cast<std::size_t>(t) + 1].value_pred;
      else
        next_v = e.truncated ? e.bootstrap_value : 0.0;
      double delta = tr.reward + gamma * next_v - tr.value_pred;
      acc = delta + gamma * lambda * acc;
      tr.advantage = acc;
      tr.value_target = acc + tr.value_pred;
    }
  }
  batch.advantages_ready = true;
}

void vtrace(RolloutBatch& batch, const PolicyParams& target, double gamma,
            double rho_bar, double c_bar) {
  if (!(rho_bar >= c_bar))
    throw std::invalid_argument("vtrace: need rho_bar >= c_bar");
  batch.validate();
  for (EpisodeSlice& e : batch.episodes) {
    int T = static_cast<int>(e.steps.size());
    // target log densities for the visited actions, one batched pass
    Tensor obs = Tensor::zeros({T, target.obs_dim});
    for (int t = 0; t < T; ++t)
      for (int d = 0; d < target.obs_dim; ++d)
        obs.at(t, d) = e.steps[static_cast<std::size_t>(t)].obs[static_cast<std::size_t>(d)];
    std::vector<ActionDistribution> dists = policy_distributions(target, obs);
    std::vector<double> log_pi(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      const Transition& tr = e.steps[static_cast<std::size_t>(t)];
      if (std::exp(tr.behavior_log_prob) == 0.0)
        throw std::invalid_argument(
            "vtrace: behavior density underflows at a visited action");
      log_pi[static_cast<std::size_t>(t)] =
          target.family == ActionFamily::Categorical
              ? log_prob(dists[static_cast<std::size_t>(t)], tr.action)
              : log_prob(dists[static_cast<std::size_t>(t)], tr.action_vec);
    }

    double acc = 0.0;  // v_{t+1} - V(s_{t+1})
    double next_target = e.truncated ? e.bootstrap_value : 0.0;
    for (int t = T - 1; t >= 0; --t) {
      Transition& tr = e.steps[static_cast<std::size_t>(t)];
      double ratio =
          std::exp(log_pi[static_cast<std::size_t>(t)] - tr.behavior_log_prob);
      double rho = std::min(ratio, rho_bar);
      double c = std::min(ratio, c_bar);
      double next_v;
      if (t < T - 1)
        next_v = e.steps[static_cast<std::size_t>(t) + 1].value_pred;
      else
        next_v = e.truncated ? e.bootstrap_value : 0.0;
      double delta = tr.reward + gamma * next_v - tr.value_pred;
      acc = rho * delta + gamma * c * acc;
      double v_t = tr.value_pred + acc;
      tr.advantage = rho * (tr.reward + gamma * next_target - tr.value_pred);
      tr.value_target = v_t;
      next_target = v_t;
    }
  }
  batch.advantages_ready = true;
}

void refresh_value_predictions(RolloutBatch& batch, const ValueParams& critic) {
  for (EpisodeSlice& e : batch.episodes) {
    int T = static_cast<int>(e.steps.size());
    int extra = e.truncated ? 1 : 0;
    Tensor obs = Tensor::zeros({T + extra, critic.obs_dim});
    for (int t = 0; t < T; ++t)
      for (int d = 0; d < critic.obs_dim; ++d)
        obs.at(t, d) = e.steps[static_cast<std::size_t>(t)].obs[static_cast<std::size_t>(d)];
    if (extra)
      for (int d = 0; d < critic.obs_dim; ++d)
        obs.at(T, d) = e.final_obs[static_cast<std::size_t>(d)];
    Tensor v = value_predict(critic, obs);
    for (int t = 0; t < T; ++t)
      e.steps[static_cast<std::size_t>(t)].value_pred = v.data[static_cast<std::size_t>(t)];
    if (extra) e.bootstrap_value = v.data[static_cast<std::size_t>(T)];
  }
}

void normalize_advantages(RolloutBatch& batch) {
  if (!batch.advantages_ready)
    throw std::logic_error("normalize_advantages: run an estimator first");
  double mean = 0.0;
  int n = 0;
  for (const EpisodeSlice& e : batch.episodes)
    for (const Transition& t : e.steps) {
      mean += t.advantage;
      n += 1;
    }
  if (n == 0) return;
  mean /= n;
  double var = 0.0;
  for (const EpisodeSlice& e : batch.episodes)
    for (const Transition& t : e.steps) {
      double d = t.advantage - mean;
      var += d * d;
    }
  double std_dev = std::sqrt(var / n);
  if (std_dev < 1e-8) return;
  for (EpisodeSlice& e : batch.episodes)
    for (Transition& t : e.steps)
      t.advantage = (t.advantage - mean) / std_dev;
}

}  // namespace toppo
