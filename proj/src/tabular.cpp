#include "toppo/tabular.hpp"

#include <cmath>
#include <stdexcept>

#include "toppo/rng.hpp"

namespace toppo {

namespace {

void check_distribution(const double* p, int n, const char* what) {
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!(p[i] >= 0.0) || !std::isfinite(p[i]))
      throw std::invalid_argument(std::string(what) + ": negative or non-finite mass");
    total += p[i];
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument(std::string(what) + ": mass does not sum to 1");
}

void dirichlet_row(double* out, int n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = e(rng);
    total += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= total;
}

}  // namespace

void TabularMDP::validate() const {
  if (num_states <= 0 || num_actions <= 0)
    throw std::invalid_argument("TabularMDP: dimensions must be positive");
  if (num_states * num_actions > 64)
    throw std::invalid_argument("TabularMDP: state-action space exceeds 64");
  if (gamma <= 0.0 || gamma >= 1.0)
    throw std::invalid_argument("TabularMDP: gamma must lie in (0, 1)");
  std::size_t sa = static_cast<std::size_t>(num_states) * num_actions;
  if (P.size() != sa * num_states || R.size() != sa ||
      rho0.size() != static_cast<std::size_t>(num_states))
    throw std::invalid_argument("TabularMDP: array sizes inconsistent");
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a)
      check_distribution(&P[(static_cast<std::size_t>(s) * num_actions + a) *
                            num_states],
                         num_states, "TabularMDP transition row");
  check_distribution(rho0.data(), num_states, "TabularMDP initial distribution");
}

void TabularPolicy::validate() const {
  if (num_states <= 0 || num_actions <= 0)
    throw std::invalid_argument("TabularPolicy: dimensions must be positive");
  if (pi.size() != static_cast<std::size_t>(num_states) * num_actions)
    throw std::invalid_argument("TabularPolicy: array size inconsistent");
  for (int s = 0; s < num_states; ++s)
    check_distribution(&pi[static_cast<std::size_t>(s) * num_actions],
                       num_actions, "TabularPolicy row");
}

TabularPolicy uniform_policy(int num_states, int num_actions) {
  TabularPolicy p;
  p.num_states = num_states;
  p.num_actions = num_actions;
  p.pi.assign(static_cast<std::size_t>(num_states) * num_actions,
              1.0 / num_actions);
  return p;
}

TabularPolicy random_tabular_policy(const TabularMDP& mdp, std::mt19937_64& rng) {
  TabularPolicy p;
  p.num_states = mdp.num_states;
  p.num_actions = mdp.num_actions;
  p.pi.resize(static_cast<std::size_t>(mdp.num_states) * mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s)
    dirichlet_row(&p.pi[static_cast<std::size_t>(s) * mdp.num_actions],
                  mdp.num_actions, rng);
  return p;
}

TabularPolicy mix_policies(const TabularPolicy& base, const TabularPolicy& other,
                           double t) {
  if (base.num_states != other.num_states ||
      base.num_actions != other.num_actions)
    throw std::invalid_argument("mix_policies: shape mismatch");
  if (t < 0.0 || t > 1.0)
    throw std::invalid_argument("mix_policies: weight outside [0, 1]");
  TabularPolicy out = base;
  for (std::size_t i = 0; i < out.pi.size(); ++i)
    out.pi[i] = (1.0 - t) * base.pi[i] + t * other.pi[i];
  return out;
}

TabularMDP random_mdp(std::uint64_t seed, int num_states, int num_actions,
                      double gamma) {
  if (num_states <= 0 || num_actions <= 0)
    throw std::invalid_argument("random_mdp: dimensions must be positive");
  if (num_states * num_actions > 64)
    throw std::invalid_argument("random_mdp: state-action space exceeds 64");
  RngSplitter split(seed);
  std::mt19937_64 rng = split.stream("random-mdp");
  TabularMDP m;
  m.num_states = num_states;
  m.num_actions = num_actions;
  m.gamma = gamma;
  std::size_t sa = static_cast<std::size_t>(num_states) * num_actions;
  m.P.resize(sa * num_states);
  m.R.resize(sa);
  m.rho0.assign(static_cast<std::size_t>(num_states), 1.0 / num_states);
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a)
      dirichlet_row(&m.P[(static_cast<std::size_t>(s) * num_actions + a) *
                         num_states],
                    num_states, rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& r : m.R) r = u(rng);
  m.validate();
  return m;
}

TabularMDP chain_mdp(int length, double gamma) {
  if (length < 2) throw std::invalid_argument("chain_mdp: length must be >= 2");
  TabularMDP m;
  m.num_states = length;
  m.num_actions = 2;
  m.gamma = gamma;
  std::size_t sa = static_cast<std::size_t>(length) * 2;
  m.P.assign(sa * length, 0.0);
  m.R.assign(sa, 0.0);
  m.rho0.assign(static_cast<std::size_t>(length), 0.0);
  m.rho0[0] = 1.0;
  for (int s = 0; s < length; ++s) {
    int left = s > 0 ? s - 1 : 0;
    int right = s < length - 1 ? s + 1 : length - 1;
    m.p(s, 0, left) = 1.0;
    m.p(s, 1, right) = 1.0;
    if (s == length - 1) m.r(s, 1) = 1.0;
  }
  m.validate();
  return m;
}

TabularMDP grid_mdp(int side, double gamma) {
  if (side < 2) throw std::invalid_argument("grid_mdp: side must be >= 2");
  if (side * side * 4 > 64)
    throw std::invalid_argument("grid_mdp: board too large for the oracle");
  int n = side * side;
  TabularMDP m;
  m.num_states = n;
  m.num_actions = 4;
  m.gamma = gamma;
  std::size_t sa = static_cast<std::size_t>(n) * 4;
  m.P.assign(sa * n, 0.0);
  m.R.assign(sa, 0.0);
  m.rho0.assign(static_cast<std::size_t>(n), 0.0);
  m.rho0[0] = 1.0;
  int goal = n - 1;
  // actions: 0 up, 1 right, 2 down, 3 left
  for (int s = 0; s < n; ++s) {
    if (s == goal) {
      for (int a = 0; a < 4; ++a) m.p(s, a, goal) = 1.0;
      continue;
    }
    int row = s / side, col = s % side;
    int dest[4] = {
        row > 0 ? s - side : s,
        col < side - 1 ? s + 1 : s,
        row < side - 1 ? s + side : s,
        col > 0 ? s - 1 : s,
    };
    for (int a = 0; a < 4; ++a) {
      m.p(s, a, dest[a]) = 1.0;
      if (dest[a] == goal) m.r(s, a) = 1.0;
    }
  }
  m.validate();
  return m;
}

TabularMDP off_policy_gap_mdp(double gamma) {
  TabularMDP m;
  m.num_states = 2;
  m.num_actions = 2;
  m.gamma = gamma;
  m.P.assign(8, 0.0);
  m.R.assign(4, 0.0);
  m.rho0 = {0.5, 0.5};
  for (int s = 0; s < 2; ++s) {
    m.p(s, 0, 0) = 1.0;
    m.p(s, 1, 1) = 1.0;
    m.r(s, 1) = 1.0;
  }
  m.validate();
  return m;
}

TabularPolicy gap_behavior(double phi) {
  if (phi <= 0.0 || phi >= 1.0)
    throw std::invalid_argument("gap_behavior: phi must lie in (0, 1)");
  TabularPolicy p;
  p.num_states = 2;
  p.num_actions = 2;
  p.pi = {phi, 1.0 - phi, phi, 1.0 - phi};
  return p;
}

TabularPolicy gap_target(double phi) {
  TabularPolicy p = gap_behavior(phi);
  for (int s = 0; s < 2; ++s) {
    double a0 = p.prob(s, 0);
    p.prob(s, 0) = p.prob(s, 1);
    p.prob(s, 1) = a0;
  }
  return p;
}

}  // namespace toppo
