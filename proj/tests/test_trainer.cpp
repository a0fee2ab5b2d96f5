#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "toppo/trainer.hpp"

using namespace toppo;

namespace {

TrainConfig chain_config() {
  TrainConfig c;
  c.env_id = "chain";
  c.total_timesteps = 768;
  c.batch_size = 256;
  c.minibatches = 8;
  c.epochs = 3;
  c.hidden = 16;
  c.eval_every = 2;
  c.eval_episodes = 3;
  c.seed = 9;
  return c;
}

bool same_metrics(const IterationMetrics& a, const IterationMetrics& b) {
  return a.iteration == b.iteration && a.env_steps == b.env_steps &&
         a.mean_episode_return == b.mean_episode_return &&
         a.policy_loss == b.policy_loss && a.value_loss == b.value_loss &&
         a.mean_kl == b.mean_kl && a.clip_fraction == b.clip_fraction &&
         a.buffer_size == b.buffer_size && a.epsilon == b.epsilon &&
         a.behavior_snapshot == b.behavior_snapshot &&
         a.deletions == b.deletions;
}

}  // namespace

TEST_CASE("the early-stop rule fires strictly above the threshold") {
  CHECK_FALSE(early_stop(0.0, 0.03));
  CHECK_FALSE(early_stop(0.03, 0.03));
  CHECK(early_stop(0.06, 0.03));
  CHECK_FALSE(early_stop(5.0, std::numeric_limits<double>::infinity()));
  CHECK_THROWS_AS(early_stop(-0.01, 0.03), std::invalid_argument);
}

TEST_CASE("training consumes exactly the configured step budget") {
  TrainConfig c = chain_config();
  TrainResult r = run_toppo(c);
  REQUIRE(r.metrics.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(r.metrics[i].iteration == i);
    CHECK(r.metrics[i].env_steps == static_cast<long>(i + 1) * 256);
  }
  CHECK(r.final_policy.obs_dim == 5);  // chain observations are one-hot
}

TEST_CASE("a repeated run reproduces every logged number") {
  TrainConfig c = chain_config();
  TrainResult a = run_toppo(c);
  TrainResult b = run_toppo(c);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i)
    CHECK(same_metrics(a.metrics[i], b.metrics[i]));
  REQUIRE(a.evals.size() == b.evals.size());
  for (std::size_t i = 0; i < a.evals.size(); ++i) {
    CHECK(a.evals[i].iteration == b.evals[i].iteration);
    CHECK(a.evals[i].mean_return == b.evals[i].mean_return);
  }
  REQUIRE(a.selection_log.size() == b.selection_log.size());
  for (std::size_t i = 0; i < a.selection_log.size(); ++i)
    CHECK(a.selection_log[i].record.divergence ==
          b.selection_log[i].record.divergence);

  TrainConfig other = c;
  other.seed = 10;
  TrainResult d = run_toppo(other);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.metrics.size(); ++i)
    if (!same_metrics(a.metrics[i], d.metrics[i])) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("a zero staleness budget keeps at most the two newest batches") {
  TrainConfig c = chain_config();
  c.total_timesteps = 1536;  // six iterations
  c.alpha = 0.0;
  TrainResult r = run_toppo(c);
  for (const IterationMetrics& m : r.metrics) CHECK(m.buffer_size <= 2);
  bool any_deletion = false;
  for (const IterationMetrics& m : r.metrics)
    if (m.deletions > 0) any_deletion = true;
  CHECK(any_deletion);
}

TEST_CASE("a zero learning rate freezes the policy and the buffer") {
  TrainConfig c = chain_config();
  c.total_timesteps = 1280;  // five iterations
  c.learning_rate = 0.0;
  TrainResult r = run_toppo(c);
  for (std::size_t i = 0; i < r.metrics.size(); ++i) {
    const IterationMetrics& m = r.metrics[i];
    CHECK(m.mean_kl == 0.0);       // the live policy never leaves the anchor
    CHECK(m.deletions == 0);       // so stored batches never go stale
    CHECK(m.buffer_size ==
          std::min(static_cast<int>(i) + 1, c.buffer_capacity));
  }
}

TEST_CASE("evaluation is deterministic given the generator state") {
  TrainConfig c = chain_config();
  TrainResult r = run_toppo(c);
  std::mt19937_64 a(3), b(3);
  double e1 = evaluate_policy(r.final_policy, "chain", 4, a);
  double e2 = evaluate_policy(r.final_policy, "chain", 4, b);
  CHECK(e1 == e2);
}

TEST_CASE("evaluation cadence and logs line up with iterations") {
  TrainConfig c = chain_config();
  c.total_timesteps = 1024;  // four iterations, eval at 2 and 4
  TrainResult r = run_toppo(c);
  REQUIRE(r.evals.size() == 2);
  CHECK(r.evals[0].iteration == 1);  // after the second iteration
  CHECK(r.evals[1].iteration == 3);
  for (const SelectionLogRow& row : r.selection_log) {
    CHECK(row.iteration >= 0);
    CHECK(row.iteration < 4);
  }
}

TEST_CASE("the one-batch degenerate case collapses onto the baseline") {
  TrainConfig c = chain_config();
  c.total_timesteps = 1024;
  c.buffer_capacity = 1;
  c.adaptive_epsilon = true;  // width backs off to the base at one batch
  TrainResult t = run_toppo(c);
  TrainConfig p = c;
  TrainResult q = run_ppo(p);
  REQUIRE(t.metrics.size() == q.metrics.size());
  for (std::size_t i = 0; i < t.metrics.size(); ++i) {
    CAPTURE(i);
    CHECK(t.metrics[i].mean_episode_return == q.metrics[i].mean_episode_return);
    CHECK(t.metrics[i].policy_loss == q.metrics[i].policy_loss);
    CHECK(t.metrics[i].value_loss == q.metrics[i].value_loss);
    CHECK(t.metrics[i].mean_kl == q.metrics[i].mean_kl);
    CHECK(t.metrics[i].epsilon == q.metrics[i].epsilon);
  }
  for (std::size_t i = 0; i < t.evals.size(); ++i)
    CHECK(t.evals[i].mean_return == q.evals[i].mean_return);
}

TEST_CASE("configuration validation rejects inconsistent settings") {
  TrainConfig c = chain_config();
  c.batch_size = 100;
  c.minibatches = 8;  // 2 * 100 not divisible by 8
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  TrainConfig bad_gamma = chain_config();
  bad_gamma.gamma = 1.5;
  CHECK_THROWS_AS(bad_gamma.validate(), std::invalid_argument);

  TrainConfig bad_budget = chain_config();
  bad_budget.total_timesteps = 0;
  CHECK_THROWS_AS(bad_budget.validate(), std::invalid_argument);

  TrainConfig bad_env = chain_config();
  bad_env.env_id = "nope";
  CHECK_THROWS_AS(run_toppo(bad_env), std::invalid_argument);

  TrainConfig c2 = chain_config();
  CHECK(c2.resolved_entropy_coef(ActionFamily::Categorical) == 0.01);
  CHECK(c2.resolved_entropy_coef(ActionFamily::Gaussian) == 0.0);
  c2.entropy_coef = 0.5;
  CHECK(c2.resolved_entropy_coef(ActionFamily::Categorical) == 0.5);
}

TEST_CASE("the importance-corrected baseline trains without selection") {
  TrainConfig c = chain_config();
  c.total_timesteps = 1024;
  TrainResult r = run_geppo(c);
  REQUIRE(r.metrics.size() == 4);
  CHECK(r.selection_log.empty());
  for (const IterationMetrics& m : r.metrics) {
    CHECK(m.deletions == 0);
    CHECK(std::isfinite(m.policy_loss));
    CHECK(std::isfinite(m.value_loss));
  }
}
