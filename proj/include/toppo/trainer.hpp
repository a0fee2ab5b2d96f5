#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toppo/policy.hpp"
#include "toppo/policy_buffer.hpp"

namespace toppo {

struct TrainConfig {
  std::string env_id = "cartpole";
  long total_timesteps = 150000;
  int batch_size = 1024;  // steps collected per policy
  int minibatches = 32;
  int epochs = 10;
  double gamma = 0.995;
  double lambda = 0.97;
  double epsilon_base = 0.2;    // clip width of the one-batch baseline
  double epsilon_fixed = 0.1;   // clip width in fixed mode
  bool adaptive_epsilon = false;
  int buffer_capacity = 5;  // N
  double alpha = 0.03;
  double learning_rate = 3e-4;
  double entropy_coef = -1.0;  // negative means pick by action family
  double early_stop_kl = 0.03;
  std::uint64_t seed = 0;
  bool disable_selection = false;
  int hidden = 64;
  int eval_every = 10;
  int eval_episodes = 10;

  void validate() const;
  double resolved_entropy_coef(ActionFamily family) const;
};

struct IterationMetrics {
  int iteration = 0;
  long env_steps = 0;
  double mean_episode_return = 0.0;  // episodes finished while collecting
  double policy_loss = 0.0;          // negative clipped surrogate
  double value_loss = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  int buffer_size = 0;
  double epsilon = 0.0;
  std::uint64_t behavior_snapshot = 0;
  int deletions = 0;
};

struct EvalRecord {
  int iteration = 0;
  long env_steps = 0;
  double mean_return = 0.0;
};

struct SelectionLogRow {
  int iteration = 0;
  SelectionRecord record;
};

struct TrainResult {
  std::vector<IterationMetrics> metrics;
  std::vector<EvalRecord> evals;
  std::vector<SelectionLogRow> selection_log;
  PolicyParams final_policy;
  ValueParams final_value;
};

// Whether an update should stop after an epoch whose mean divergence from
// the iteration's starting policy reached `mean_kl`.
bool early_stop(double mean_kl, double threshold);

// Multi-batch training loop: collect, store, update against a sampled old
// batch with anchor-centered clipping, then filter stale batches.
TrainResult run_toppo(const TrainConfig& config);

// One-batch baseline with constant clip bounds.
TrainResult run_ppo(const TrainConfig& config);

// Multi-batch baseline: importance-corrected value targets recomputed
// toward the current policy each iteration, unfloored lower clip bound,
// no staleness filtering.
TrainResult run_geppo(const TrainConfig& config);

// mean +/- std of episode return under greedy actions, fresh environment.
double evaluate_policy(const PolicyParams& policy, const std::string& env_id,
                       int episodes, std::mt19937_64& rng);

}  // namespace toppo
