#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "toppo/policy.hpp"
#include "toppo/tabular.hpp"

namespace toppo {

struct EnvSpec {
  std::string id;
  int obs_dim = 0;
  ActionFamily family = ActionFamily::Categorical;
  int num_actions = 0;                    // categorical family
  int act_dim = 0;                        // Gaussian family
  std::vector<double> action_low, action_high;
  int max_episode_length = 0;
  std::string reward_note;
};

struct StepResult {
  std::vector<double> obs;
  double reward = 0.0;
  bool terminated = false;  // the MDP ended
  bool truncated = false;   // the horizon cut the episode
  bool done() const { return terminated || truncated; }
};

// Episodic environment. reset() draws the initial state from the provided
// stream; step() advances one transition (the stream is only touched by
// stochastic dynamics). Stepping a finished or unreset episode throws.
class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual std::vector<double> reset(std::mt19937_64& rng) = 0;
  virtual StepResult step(int action, std::mt19937_64& rng);
  virtual StepResult step(const std::vector<double>& action,
                          std::mt19937_64& rng);
};

// Pole balancing on a cart, Euler-integrated at 20 ms, reward 1 per step,
// episode ends when the pole or cart leaves its bounds or at 500 steps.
class CartPoleEnv : public Env {
 public:
  CartPoleEnv();
  const EnvSpec& spec() const override { return spec_; }
  std::vector<double> reset(std::mt19937_64& rng) override;
  StepResult step(int action, std::mt19937_64& rng) override;

 private:
  std::vector<double> observe() const;
  EnvSpec spec_;
  double x_ = 0, x_dot_ = 0, theta_ = 0, theta_dot_ = 0;
  int steps_ = 0;
  bool live_ = false;
};

// Torque-limited pendulum swing-up with quadratic state-action cost and a
// fixed 200-step horizon.
class PendulumEnv : public Env {
 public:
  PendulumEnv();
  const EnvSpec& spec() const override { return spec_; }
  std::vector<double> reset(std::mt19937_64& rng) override;
  StepResult step(const std::vector<double>& action,
                  std::mt19937_64& rng) override;
  void set_state(double theta, double theta_dot);  // test hook

 private:
  std::vector<double> observe() const;
  EnvSpec spec_;
  double theta_ = 0, theta_dot_ = 0;
  int steps_ = 0;
  bool live_ = false;
};

// Finite MDP behind the common Env interface; observations are one-hot.
class TabularEnv : public Env {
 public:
  TabularEnv(TabularMDP mdp, std::string id, int horizon);
  const EnvSpec& spec() const override { return spec_; }
  std::vector<double> reset(std::mt19937_64& rng) override;
  StepResult step(int action, std::mt19937_64& rng) override;
  const TabularMDP& mdp() const { return mdp_; }
  int state() const { return state_; }

 private:
  std::vector<double> observe() const;
  TabularMDP mdp_;
  EnvSpec spec_;
  int state_ = 0;
  int steps_ = 0;
  bool live_ = false;
};

// Environment ids: "cartpole", "pendulum", "chain", "grid",
// "random:<seed>:<S>:<A>". Unknown ids throw, naming the id.
std::unique_ptr<Env> make_env(const std::string& id);

int sample_index(const double* probs, int n, std::mt19937_64& rng);

}  // namespace toppo
