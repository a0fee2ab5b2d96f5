#include "toppo/envs.hpp"

#include <cmath>
#include <stdexcept>

namespace toppo {

namespace {

constexpr double kPi = 3.14159265358979323846;

double angle_normalize(double x) {
  double y = std::fmod(x + kPi, 2.0 * kPi);
  if (y < 0) y += 2.0 * kPi;
  return y - kPi;
}

}  // namespace

StepResult Env::step(int, std::mt19937_64&) {
  throw std::invalid_argument("step: environment takes continuous actions");
}

StepResult Env::step(const std::vector<double>&, std::mt19937_64&) {
  throw std::invalid_argument("step: environment takes discrete actions");
}

int sample_index(const double* probs, int n, std::mt19937_64& rng) {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return n - 1;
}

CartPoleEnv::CartPoleEnv() {
  spec_.id = "cartpole";
  spec_.obs_dim = 4;
  spec_.family = ActionFamily::Categorical;
  spec_.num_actions = 2;
  spec_.max_episode_length = 500;
  spec_.reward_note = "reward 1 per step while balanced";
}

std::vector<double> CartPoleEnv::observe() const {
  return {x_, x_dot_, theta_, theta_dot_};
}

std::vector<double> CartPoleEnv::reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  x_ = u(rng);
  x_dot_ = u(rng);
  theta_ = u(rng);
  theta_dot_ = u(rng);
  steps_ = 0;
  live_ = true;
  return observe();
}

StepResult CartPoleEnv::step(int action, std::mt19937_64&) {
  if (!live_) throw std::logic_error("step: episode not running; call reset");
  if (action < 0 || action >= spec_.num_actions)
    throw std::invalid_argument("step: action out of range for cartpole");
  constexpr double gravity = 9.8;
  constexpr double mass_cart = 1.0;
  constexpr double mass_pole = 0.1;
  constexpr double total_mass = mass_cart + mass_pole;
  constexpr double length = 0.5;  // half the pole
  constexpr double pole_mass_length = mass_pole * length;
  constexpr double force_mag = 10.0;
  constexpr double tau = 0.02;
  constexpr double theta_limit = 12.0 * 2.0 * kPi / 360.0;
  constexpr double x_limit = 2.4;

  double force = action == 1 ? force_mag : -force_mag;
  double cos_t = std::cos(theta_);
  double sin_t = std::sin(theta_);
  double temp =
      (force + pole_mass_length * theta_dot_ * theta_dot_ * sin_t) / total_mass;
  double theta_acc =
      (gravity * sin_t - cos_t * temp) /
      (length * (4.0 / 3.0 - mass_pole * cos_t * cos_t / total_mass));
  double x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;

  x_ += tau * x_dot_;
  x_dot_ += tau * x_acc;
  theta_ += tau * theta_dot_;
  theta_dot_ += tau * theta_acc;
  steps_ += 1;

  StepResult r;
  r.obs = observe();
  r.reward = 1.0;
  r.terminated = std::abs(x_) > x_limit || std::abs(theta_) > theta_limit;
  r.truncated = !r.terminated && steps_ >= spec_.max_episode_length;
  if (r.done()) live_ = false;
  return r;
}

PendulumEnv::PendulumEnv() {
  spec_.id = "pendulum";
  spec_.obs_dim = 3;
  spec_.family = ActionFamily::Gaussian;
  spec_.act_dim = 1;
  spec_.action_low = {-2.0};
  spec_.action_high = {2.0};
  spec_.max_episode_length = 200;
  spec_.reward_note = "negative quadratic cost on angle, speed and torque";
}

std::vector<double> PendulumEnv::observe() const {
  return {std::cos(theta_), std::sin(theta_), theta_dot_};
}

std::vector<double> PendulumEnv::reset(std::mt19937_64& rng) {
  theta_ = std::uniform_real_distribution<double>(-kPi, kPi)(rng);
  theta_dot_ = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  steps_ = 0;
  live_ = true;
  return observe();
}

void PendulumEnv::set_state(double theta, double theta_dot) {
  theta_ = theta;
  theta_dot_ = theta_dot;
  steps_ = 0;
  live_ = true;
}

StepResult PendulumEnv::step(const std::vector<double>& action,
                             std::mt19937_64&) {
  if (!live_) throw std::logic_error("step: episode not running; call reset");
  if (action.size() != 1)
    throw std::invalid_argument("step: pendulum takes a single torque");
  if (!std::isfinite(action[0]))
    throw std::invalid_argument("step: non-finite torque");
  constexpr double g = 10.0;
  constexpr double m = 1.0;
  constexpr double l = 1.0;
  constexpr double dt = 0.05;
  constexpr double max_speed = 8.0;
  constexpr double max_torque = 2.0;

  double u = std::clamp(action[0], -max_torque, max_torque);
  double th = angle_normalize(theta_);
  double cost = th * th + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;

  theta_dot_ += (3.0 * g / (2.0 * l) * std::sin(theta_) +
                 3.0 / (m * l * l) * u) *
                dt;
  theta_dot_ = std::clamp(theta_dot_, -max_speed, max_speed);
  theta_ += theta_dot_ * dt;
  steps_ += 1;

  StepResult r;
  r.obs = observe();
  r.reward = -cost;
  r.truncated = steps_ >= spec_.max_episode_length;
  if (r.done()) live_ = false;
  return r;
}

TabularEnv::TabularEnv(TabularMDP mdp, std::string id, int horizon)
    : mdp_(std::move(mdp)) {
  mdp_.validate();
  if (horizon <= 0) throw std::invalid_argument("TabularEnv: horizon <= 0");
  spec_.id = std::move(id);
  spec_.obs_dim = mdp_.num_states;
  spec_.family = ActionFamily::Categorical;
  spec_.num_actions = mdp_.num_actions;
  spec_.max_episode_length = horizon;
  spec_.reward_note = "tabular rewards on [-1, 1]";
}

std::vector<double> TabularEnv::observe() const {
  std::vector<double> o(static_cast<std::size_t>(mdp_.num_states), 0.0);
  o[static_cast<std::size_t>(state_)] = 1.0;
  return o;
}

std::vector<double> TabularEnv::reset(std::mt19937_64& rng) {
  state_ = sample_index(mdp_.rho0.data(), mdp_.num_states, rng);
  steps_ = 0;
  live_ = true;
  return observe();
}

StepResult TabularEnv::step(int action, std::mt19937_64& rng) {
  if (!live_) throw std::logic_error("step: episode not running; call reset");
  if (action < 0 || action >= mdp_.num_actions)
    throw std::invalid_argument("step: action out of range for tabular env");
  double reward = mdp_.r(state_, action);
  const double* row = &mdp_.P[(static_cast<std::size_t>(state_) *
                               mdp_.num_actions + action) * mdp_.num_states];
  state_ = sample_index(row, mdp_.num_states, rng);
  steps_ += 1;

  StepResult r;
  r.obs = observe();
  r.reward = reward;
  r.truncated = steps_ >= spec_.max_episode_length;
  if (r.done()) live_ = false;
  return r;
}

std::unique_ptr<Env> make_env(const std::string& id) {
  if (id == "cartpole") return std::make_unique<CartPoleEnv>();
  if (id == "pendulum") return std::make_unique<PendulumEnv>();
  if (id == "chain") return std::make_unique<TabularEnv>(chain_mdp(), id, 100);
  if (id == "grid") return std::make_unique<TabularEnv>(grid_mdp(), id, 100);
  if (id.rfind("random:", 0) == 0) {
    std::string rest = id.substr(7);
    auto c1 = rest.find(':');
    auto c2 = c1 == std::string::npos ? std::string::npos
                                      : rest.find(':', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw std::invalid_argument(
          "make_env: expected random:<seed>:<S>:<A>, got \"" + id + "\"");
    std::uint64_t seed;
    int S, A;
    try {
      seed = std::stoull(rest.substr(0, c1));
      S = std::stoi(rest.substr(c1 + 1, c2 - c1 - 1));
      A = std::stoi(rest.substr(c2 + 1));
    } catch (const std::exception&) {
      throw std::invalid_argument(
          "make_env: expected random:<seed>:<S>:<A>, got \"" + id + "\"");
    }
    return std::make_unique<TabularEnv>(random_mdp(seed, S, A, 0.99), id, 100);
  }
  throw std::invalid_argument("make_env: unknown environment id \"" + id + "\"");
}

}  // namespace toppo
