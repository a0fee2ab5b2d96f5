#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace toppo {

// Finite MDP with dense transitions. P is indexed [s][a][s'], R is [s][a].
// Sized for exact linear-algebra treatment: S * A must stay at or below 64.
struct TabularMDP {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> P;   // S*A*S, rows sum to 1
  std::vector<double> R;   // S*A
  std::vector<double> rho0;  // initial state distribution, length S
  double gamma = 0.99;

  double p(int s, int a, int s2) const {
    return P[(static_cast<std::size_t>(s) * num_actions + a) * num_states + s2];
  }
  double& p(int s, int a, int s2) {
    return P[(static_cast<std::size_t>(s) * num_actions + a) * num_states + s2];
  }
  double r(int s, int a) const {
    return R[static_cast<std::size_t>(s) * num_actions + a];
  }
  double& r(int s, int a) {
    return R[static_cast<std::size_t>(s) * num_actions + a];
  }

  void validate() const;  // shapes, stochasticity, size limit
};

// Stochastic policy over a TabularMDP, indexed [s][a].
struct TabularPolicy {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> pi;

  double prob(int s, int a) const {
    return pi[static_cast<std::size_t>(s) * num_actions + a];
  }
  double& prob(int s, int a) {
    return pi[static_cast<std::size_t>(s) * num_actions + a];
  }

  void validate() const;
};

TabularPolicy uniform_policy(int num_states, int num_actions);

// Dirichlet(1,...,1) rows via normalized exponential draws.
TabularPolicy random_tabular_policy(const TabularMDP& mdp, std::mt19937_64& rng);

// Mixture (1 - t) * base + t * other, elementwise.
TabularPolicy mix_policies(const TabularPolicy& base, const TabularPolicy& other,
                           double t);

// Dense random MDP: transition rows drawn Dirichlet-uniform, rewards
// uniform on [-1, 1], uniform initial distribution. Deterministic in seed.
TabularMDP random_mdp(std::uint64_t seed, int num_states, int num_actions,
                      double gamma);

// Walk right to collect a terminal-ish reward at the far end; moving left
// or bumping the start yields nothing. Good mixing, short horizon.
TabularMDP chain_mdp(int length = 5, double gamma = 0.95);

// Deterministic gridworld on a side x side board, actions up/right/down/left,
// reward 1 on entering the absorbing goal corner.
TabularMDP grid_mdp(int side = 4, double gamma = 0.95);

// Two-state, two-action MDP where importance truncation visibly bends the
// value estimate: action 0 leads to state 0 with reward 0, action 1 leads to
// state 1 with reward 1, from either state.
TabularMDP off_policy_gap_mdp(double gamma = 0.9);

// The mirrored policy pair for off_policy_gap_mdp: behavior plays the
// rewarding action with probability 1 - phi, the target with probability phi.
TabularPolicy gap_behavior(double phi);
TabularPolicy gap_target(double phi);

}  // namespace toppo
