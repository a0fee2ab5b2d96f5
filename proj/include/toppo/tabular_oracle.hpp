#pragma once

#include <random>
#include <vector>

#include "toppo/tabular.hpp"

namespace toppo {

// Exact dynamic-programming quantities for one policy on one MDP.
struct ExactEvaluation {
  std::vector<double> V;    // S
  std::vector<double> Q;    // S*A
  std::vector<double> Adv;  // S*A, Q - V
  std::vector<double> rho;  // normalized discounted state visitation, S
  double eta = 0.0;         // expected discounted return from rho0

  double q(int s, int a, int num_actions) const {
    return Q[static_cast<std::size_t>(s) * num_actions + a];
  }
  double adv(int s, int a, int num_actions) const {
    return Adv[static_cast<std::size_t>(s) * num_actions + a];
  }
};

ExactEvaluation evaluate(const TabularMDP& mdp, const TabularPolicy& pi);

struct PerformanceDifference {
  double gap;             // eta(pi_new) - eta(pi_old)
  double advantage_form;  // visitation-weighted advantage identity
};

PerformanceDifference performance_difference(const TabularMDP& mdp,
                                             const TabularPolicy& pi_new,
                                             const TabularPolicy& pi_old);

// One evaluated policy-improvement lower bound. The same report shape covers
// the bound built on the current policy's advantages and the one built on
// the behavior policy's advantages; the staleness penalty is zero for the
// former.
struct BoundReport {
  double lhs = 0.0;        // eta(pi) - eta(pi_k)
  double surrogate = 0.0;  // importance-weighted advantage term
  double epsilon = 0.0;    // max |A| of the advantage the bound is built on
  double tv_mean_behavior_candidate = 0.0;  // E_{rho_mu} TV(mu, pi)
  double tv_max_behavior_candidate = 0.0;   // max_s TV(mu, pi)
  double tv_max_anchor_candidate = 0.0;     // max_s TV(pi_k, pi)
  double tv_max_behavior_anchor = 0.0;      // max_s TV(mu, pi_k)
  double staleness_penalty = 0.0;
  double shift_penalty = 0.0;
  double rhs = 0.0;
  bool satisfied = false;  // lhs >= rhs - 1e-9
};

// Lower bound whose surrogate weighs the CURRENT policy's advantages by
// pi/mu under mu's visitation; penalty scales with max-state TV(pi_k, pi)
// times mean TV(mu, pi).
BoundReport anchor_advantage_bound(const TabularMDP& mdp,
                                   const TabularPolicy& pi_k,
                                   const TabularPolicy& pi,
                                   const TabularPolicy& mu);

// Lower bound whose surrogate weighs the BEHAVIOR policy's own advantages;
// pays an extra staleness penalty in max-state TV(mu, pi_k).
BoundReport behavior_advantage_bound(const TabularMDP& mdp,
                                     const TabularPolicy& pi_k,
                                     const TabularPolicy& pi,
                                     const TabularPolicy& mu);

// Trust-region objective built at pi_k: surrogate minus the TV penalty.
double trust_region_objective(const TabularMDP& mdp, const TabularPolicy& pi_k,
                              const ExactEvaluation& eval_k,
                              const TabularPolicy& pi);

// Maximizes the trust-region objective over tabular policies by projected
// gradient ascent; restarts from random interior points when a run stalls
// below zero.
struct TrustRegionMax {
  TabularPolicy pi_next;
  double objective = 0.0;
  bool positive = false;  // objective > 0 achieved
};
TrustRegionMax maximize_trust_region(const TabularMDP& mdp,
                                     const TabularPolicy& pi_k,
                                     std::mt19937_64& rng, int iterations = 500,
                                     double step = 0.1, int restarts = 4);

// For each candidate behavior policy, evaluates whether the behavior-side
// lower bound at the trust-region maximizer stays positive, and reports the
// largest distance-to-anchor among the passing candidates.
struct MonotonicCheck {
  TrustRegionMax maximizer;
  struct PerBehavior {
    double distance_to_anchor = 0.0;  // E_{rho_mu} TV(mu, pi_k)
    double bound_value = 0.0;
    bool positive = false;
  };
  std::vector<PerBehavior> behaviors;
  double max_passing_alpha = -1.0;  // -1 when no candidate passes
};
MonotonicCheck monotonic_improvement_check(
    const TabularMDP& mdp, const TabularPolicy& pi_k,
    const std::vector<TabularPolicy>& behavior_candidates,
    std::mt19937_64& rng);

// Exact fixed point of truncated-importance-weight value estimation: the
// estimator converges to the value of a policy proportional to
// min(rho_bar * mu, pi) rather than of pi itself.
struct TruncatedFixedPoint {
  TabularPolicy pi_rho;
  std::vector<double> V;  // value of pi_rho
};
TruncatedFixedPoint vtrace_fixed_point(const TabularMDP& mdp,
                                       const TabularPolicy& pi,
                                       const TabularPolicy& mu, double rho_bar,
                                       double c_bar);

// Mean value under the current policy's visitation before and after an
// update whose linear surrogate term is nonnegative.
struct ValueImprovementCheck {
  double linear_term = 0.0;  // E_{rho_k, pi_next} A^{pi_k}
  bool hypothesis_holds = false;
  double mean_value_before = 0.0;  // E_{rho_k} V^{pi_k}
  double mean_value_after = 0.0;   // E_{rho_k} V^{pi_next}
  bool improved = false;
};
ValueImprovementCheck ppo_value_improvement_check(const TabularMDP& mdp,
                                                  const TabularPolicy& pi_k,
                                                  const TabularPolicy& pi_next);

// Exact per-state maximizer of the clipped surrogate around pi_k: positive
// advantage actions are raised to (1 + epsilon) times their old probability,
// best first, and leftover mass lands on the best action. Every state of
// the result has nonnegative expected advantage under pi_k's advantages.
TabularPolicy clipped_update(const TabularPolicy& pi_k,
                             const ExactEvaluation& eval_k, double epsilon);

// Per-state total variation rows and their aggregates.
double tv_at_state(const TabularPolicy& a, const TabularPolicy& b, int s);
double mean_tv(const std::vector<double>& rho, const TabularPolicy& a,
               const TabularPolicy& b);
double max_tv(const TabularPolicy& a, const TabularPolicy& b);

// One-norm gap between two visitation vectors, for the visitation-shift
// inequality used inside the lower-bound proofs.
double visitation_l1_gap(const TabularMDP& mdp, const TabularPolicy& pi_new,
                         const TabularPolicy& pi_old);

}  // namespace toppo
