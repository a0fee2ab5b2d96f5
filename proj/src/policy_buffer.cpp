#include "toppo/policy_buffer.hpp"

#include <stdexcept>
#include <string>

namespace toppo {

PolicySet::PolicySet(int capacity, double alpha)
    : capacity_(capacity), alpha_(alpha) {
  if (capacity < 1) throw std::invalid_argument("PolicySet: capacity < 1");
  if (alpha < 0.0) throw std::invalid_argument("PolicySet: negative alpha");
}

void PolicySet::insert(RolloutBatch batch) {
  for (const PolicyEntry& e : entries_) {
    if (e.snapshot_id == batch.snapshot_id)
      throw std::invalid_argument("PolicySet: duplicate snapshot id " +
                                  std::to_string(batch.snapshot_id));
  }
  if (!entries_.empty() && batch.snapshot_id < entries_.back().snapshot_id)
    throw std::invalid_argument("PolicySet: snapshot id older than newest");
  PolicyEntry entry;
  entry.snapshot_id = batch.snapshot_id;
  entry.batch = std::move(batch);
  entries_.push_back(std::move(entry));
  while (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
}

double PolicySet::stale_divergence(const PolicyEntry& entry,
                                   const PolicyParams& current) const {
  double acc = 0.0;
  int count = 0;
  for (const EpisodeSlice& ep : entry.batch.episodes) {
    for (const Transition& t : ep.steps) {
      ActionDistribution now = policy_distribution(current, t.obs);
      acc += kl_divergence(t.behavior_dist, now);
      count += 1;
    }
  }
  if (count == 0) return 0.0;
  return acc / count;
}

std::vector<SelectionRecord> PolicySet::select(const PolicyParams& current) {
  std::vector<SelectionRecord> log;
  if (entries_.empty()) return log;
  std::deque<PolicyEntry> kept;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    bool newest = (i + 1 == entries_.size());
    SelectionRecord rec;
    rec.snapshot_id = entries_[i].snapshot_id;
    rec.divergence = stale_divergence(entries_[i], current);
    rec.deleted = !newest && rec.divergence > alpha_;
    log.push_back(rec);
    if (!rec.deleted) kept.push_back(std::move(entries_[i]));
  }
  entries_ = std::move(kept);
  return log;
}

const PolicyEntry* PolicySet::sample_behavior(std::mt19937_64& rng) const {
  if (entries_.size() < 2) return nullptr;
  std::size_t eligible = entries_.size() - 1;  // everything but the newest
  std::size_t idx = static_cast<std::size_t>(rng() % eligible);
  return &entries_[idx];
}

double EpsilonSchedule::epsilon(int n_eff) const {
  if (n_eff < 1) throw std::invalid_argument("EpsilonSchedule: N < 1");
  if (mode == Mode::Fixed) return current;
  return clip_epsilon_for(base, n_eff);
}

double clip_epsilon_for(double base, int n) {
  if (n < 1) throw std::invalid_argument("clip_epsilon_for: N < 1");
  if (n == 1) return base;
  return 4.0 / (n + 4.0) * base;
}

}  // namespace toppo
