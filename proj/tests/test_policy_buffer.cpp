#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "toppo/policy.hpp"
#include "toppo/policy_buffer.hpp"

using namespace toppo;

namespace {

// Single-step batch whose stored distribution we control directly.
RolloutBatch tagged_batch(std::uint64_t id, const std::vector<double>& probs) {
  RolloutBatch b;
  b.snapshot_id = id;
  EpisodeSlice e;
  Transition t;
  t.obs = {0.25, -0.5};
  t.action = 0;
  t.behavior_log_prob = std::log(std::max(probs[0], 1e-12));
  t.behavior_dist.family = ActionFamily::Categorical;
  t.behavior_dist.probs = probs;
  for (double p : probs)
    t.behavior_dist.log_probs.push_back(std::log(p));  // -inf stays unread
  e.steps.push_back(t);
  b.episodes.push_back(e);
  return b;
}

// Zero weights: the policy emits the uniform distribution at every input.
PolicyParams uniform_net(int obs_dim, int num_actions) {
  std::mt19937_64 rng(0);
  PolicyParams p =
      make_policy(ActionFamily::Categorical, obs_dim, num_actions, 8, 8, rng);
  for (Tensor* t : p.tensors())
    for (double& v : t->data) v = 0.0;
  return p;
}

}  // namespace

TEST_CASE("insertion keeps order and evicts only past capacity") {
  PolicySet set(5, 0.03);
  CHECK(set.size() == 0);
  set.insert(tagged_batch(1, {0.5, 0.5}));
  CHECK(set.size() == 1);
  CHECK(set.entries().front().snapshot_id == 1);

  for (std::uint64_t id = 2; id <= 6; ++id)
    set.insert(tagged_batch(id, {0.5, 0.5}));
  CHECK(set.size() == 5);
  CHECK(set.entries().front().snapshot_id == 2);  // 1 was evicted
  CHECK(set.entries().back().snapshot_id == 6);
}

TEST_CASE("identifiers must strictly increase") {
  PolicySet set(3, 0.03);
  set.insert(tagged_batch(7, {0.5, 0.5}));
  CHECK_THROWS_AS(set.insert(tagged_batch(7, {0.5, 0.5})),
                  std::invalid_argument);
  CHECK_THROWS_AS(set.insert(tagged_batch(3, {0.5, 0.5})),
                  std::invalid_argument);
  CHECK(set.size() == 1);
  CHECK_THROWS_AS(PolicySet(0, 0.03), std::invalid_argument);
  CHECK_THROWS_AS(PolicySet(3, -0.1), std::invalid_argument);
}

TEST_CASE("batches matching the current policy survive selection") {
  PolicyParams current = uniform_net(2, 2);
  PolicySet set(5, 0.03);
  for (std::uint64_t id = 1; id <= 3; ++id)
    set.insert(tagged_batch(id, {0.5, 0.5}));  // exactly the current policy

  auto log = set.select(current);
  REQUIRE(log.size() == 3);
  for (const SelectionRecord& r : log) {
    CHECK(r.divergence <= 1e-12);
    CHECK_FALSE(r.deleted);
  }
  CHECK(set.size() == 3);
}

TEST_CASE("a drifted batch is deleted once it crosses the threshold") {
  PolicyParams current = uniform_net(2, 2);
  PolicySet set(5, 0.03);
  set.insert(tagged_batch(1, {1.0, 0.0}));  // KL against uniform is log 2
  set.insert(tagged_batch(2, {0.5, 0.5}));

  auto log = set.select(current);
  REQUIRE(log.size() == 2);
  CHECK(log[0].divergence == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(log[0].deleted);
  CHECK_FALSE(log[1].deleted);
  CHECK(set.size() == 1);
  CHECK(set.entries().front().snapshot_id == 2);
}

TEST_CASE("the threshold comparison is strict") {
  PolicyParams current = uniform_net(2, 2);
  std::vector<double> drifted = {0.6, 0.4};
  PolicySet probe(5, 1.0);
  probe.insert(tagged_batch(1, drifted));
  double div = probe.stale_divergence(probe.entries().front(), current);
  CHECK(div > 0.0);

  PolicySet at(5, div);  // divergence equals alpha: kept
  at.insert(tagged_batch(1, drifted));
  at.insert(tagged_batch(2, {0.5, 0.5}));
  auto log_at = at.select(current);
  CHECK_FALSE(log_at[0].deleted);

  PolicySet below(5, std::nextafter(div, 0.0));  // just under: dropped
  below.insert(tagged_batch(1, drifted));
  below.insert(tagged_batch(2, {0.5, 0.5}));
  auto log_below = below.select(current);
  CHECK(log_below[0].deleted);
}

TEST_CASE("the newest batch outlives any divergence") {
  PolicyParams current = uniform_net(2, 2);
  PolicySet set(5, 0.03);
  set.insert(tagged_batch(1, {1.0, 0.0}));
  auto log = set.select(current);
  REQUIRE(log.size() == 1);
  CHECK(log[0].divergence > 0.03);
  CHECK_FALSE(log[0].deleted);
  CHECK(set.size() == 1);

  // still true when older entries exist and everything is stale
  set.insert(tagged_batch(2, {0.0, 1.0}));
  auto log2 = set.select(current);
  CHECK(log2[0].deleted);
  CHECK_FALSE(log2[1].deleted);
  CHECK(set.entries().front().snapshot_id == 2);
}

TEST_CASE("behavior sampling is uniform over the non-newest entries") {
  PolicySet lone(5, 0.03);
  std::mt19937_64 rng(17);
  CHECK(lone.sample_behavior(rng) == nullptr);
  lone.insert(tagged_batch(1, {0.5, 0.5}));
  CHECK(lone.sample_behavior(rng) == nullptr);  // only the newest exists

  PolicySet set(5, 0.03);
  for (std::uint64_t id = 1; id <= 3; ++id)
    set.insert(tagged_batch(id, {0.5, 0.5}));
  int count1 = 0, count2 = 0;
  for (int i = 0; i < 10000; ++i) {
    const PolicyEntry* e = set.sample_behavior(rng);
    REQUIRE(e != nullptr);
    CHECK(e->snapshot_id != 3);  // never the newest
    if (e->snapshot_id == 1) count1 += 1;
    if (e->snapshot_id == 2) count2 += 1;
  }
  CHECK(count1 + count2 == 10000);
  CHECK(count1 > 5000 - 150);  // three sigma around a fair split
  CHECK(count1 < 5000 + 150);

  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 50; ++i)
    CHECK(set.sample_behavior(a)->snapshot_id ==
          set.sample_behavior(b)->snapshot_id);
}

TEST_CASE("the clip width schedule shrinks with the retained count") {
  CHECK(clip_epsilon_for(0.2, 1) == 0.2);
  CHECK(clip_epsilon_for(0.2, 5) ==
        doctest::Approx(4.0 / 9.0 * 0.2).epsilon(1e-12));
  double prev = clip_epsilon_for(0.2, 1);
  for (int n = 2; n <= 50; ++n) {
    double e = clip_epsilon_for(0.2, n);
    CHECK(e < prev);
    prev = e;
  }
  CHECK_THROWS_AS(clip_epsilon_for(0.2, 0), std::invalid_argument);

  EpsilonSchedule fixed;
  fixed.mode = EpsilonSchedule::Mode::Fixed;
  fixed.current = 0.1;
  CHECK(fixed.epsilon(1) == 0.1);
  CHECK(fixed.epsilon(5) == 0.1);

  EpsilonSchedule adaptive;
  adaptive.mode = EpsilonSchedule::Mode::Adaptive;
  adaptive.base = 0.2;
  CHECK(adaptive.epsilon(1) == 0.2);
  CHECK(adaptive.epsilon(6) == doctest::Approx(0.08).epsilon(1e-12));
  CHECK_THROWS_AS(adaptive.epsilon(0), std::invalid_argument);
}
