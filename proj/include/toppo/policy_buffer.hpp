#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <vector>

#include "toppo/estimators.hpp"
#include "toppo/policy.hpp"

namespace toppo {

// One retained behavior batch. Holds trajectories plus the per-state
// distribution parameters recorded at collection time; deliberately no
// network weights, so the storage cost scales with the batch, not the
// parameter count.
struct PolicyEntry {
  std::uint64_t snapshot_id = 0;
  RolloutBatch batch;
};

struct SelectionRecord {
  std::uint64_t snapshot_id = 0;
  double divergence = 0.0;  // mean per-state KL(stored dist, current policy)
  bool deleted = false;
};

// FIFO set of at most `capacity` behavior batches with a staleness filter.
class PolicySet {
 public:
  PolicySet(int capacity, double alpha);

  // Appends a batch; evicts the oldest when over capacity. The batch id must
  // be strictly newer than everything already stored.
  void insert(RolloutBatch batch);

  // Drops every entry except the newest whose mean KL against `current`
  // exceeds alpha. Returns one record per entry examined, insertion order.
  std::vector<SelectionRecord> select(const PolicyParams& current);

  // Uniform draw among entries other than the newest; nullptr if there are
  // none. The pointer stays valid until the next insert or select.
  const PolicyEntry* sample_behavior(std::mt19937_64& rng) const;

  double stale_divergence(const PolicyEntry& entry,
                          const PolicyParams& current) const;

  int size() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return capacity_; }
  double alpha() const { return alpha_; }
  const std::deque<PolicyEntry>& entries() const { return entries_; }

 private:
  int capacity_;
  double alpha_;
  std::deque<PolicyEntry> entries_;
};

// Clip-width schedule. Fixed mode always returns `current`; adaptive mode
// shrinks the base width as the number of retained batches grows, keeping
// the worst-case per-update performance loss of the one-batch setting.
struct EpsilonSchedule {
  enum class Mode { Fixed, Adaptive };
  Mode mode = Mode::Fixed;
  double base = 0.2;     // width used by the one-batch baseline
  double current = 0.1;  // width used in fixed mode

  double epsilon(int n_eff) const;
};

// 4/(N+4) * base for N >= 2, base for N = 1.
double clip_epsilon_for(double base, int n);

}  // namespace toppo
