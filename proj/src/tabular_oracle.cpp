#include "toppo/tabular_oracle.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace toppo {

namespace {

constexpr double kBoundSlack = 1e-9;

Eigen::MatrixXd policy_transition(const TabularMDP& mdp,
                                  const TabularPolicy& pi) {
  int S = mdp.num_states, A = mdp.num_actions;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double w = pi.prob(s, a);
      if (w == 0.0) continue;
      for (int s2 = 0; s2 < S; ++s2) P(s, s2) += w * mdp.p(s, a, s2);
    }
  return P;
}

void check_shapes(const TabularMDP& mdp, const TabularPolicy& pi) {
  mdp.validate();
  pi.validate();
  if (pi.num_states != mdp.num_states || pi.num_actions != mdp.num_actions)
    throw std::invalid_argument("policy does not match MDP shape");
}

// Importance weights pi/mu must exist wherever the surrogate puts mass.
void check_support(const TabularPolicy& mu, const TabularPolicy& pi) {
  for (int s = 0; s < mu.num_states; ++s)
    for (int a = 0; a < mu.num_actions; ++a)
      if (mu.prob(s, a) == 0.0 && pi.prob(s, a) > 0.0)
        throw std::invalid_argument(
            "importance ratio undefined: behavior policy has zero mass where "
            "the candidate does not");
}

double importance_surrogate(const TabularMDP& mdp, const ExactEvaluation& ref,
                            const TabularPolicy& mu, const TabularPolicy& pi,
                            const ExactEvaluation& mu_eval) {
  check_support(mu, pi);
  int S = mdp.num_states, A = mdp.num_actions;
  double acc = 0.0;
  for (int s = 0; s < S; ++s) {
    double row = 0.0;
    for (int a = 0; a < A; ++a) row += pi.prob(s, a) * ref.adv(s, a, A);
    acc += mu_eval.rho[static_cast<std::size_t>(s)] * row;
  }
  return acc / (1.0 - mdp.gamma);
}

double max_abs_adv(const ExactEvaluation& eval) {
  double m = 0.0;
  for (double a : eval.Adv) m = std::max(m, std::abs(a));
  return m;
}

// Euclidean projection of a row onto the probability simplex.
void project_simplex(double* row, int n) {
  std::vector<double> u(row, row + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  int rho = -1;
  for (int i = 0; i < n; ++i) {
    css += u[static_cast<std::size_t>(i)];
    double t = (css - 1.0) / (i + 1);
    if (u[static_cast<std::size_t>(i)] - t > 0) {
      rho = i;
      theta = t;
    }
  }
  (void)rho;
  for (int i = 0; i < n; ++i) row[i] = std::max(row[i] - theta, 0.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += row[i];
  for (int i = 0; i < n; ++i) row[i] /= total;
}

}  // namespace

ExactEvaluation evaluate(const TabularMDP& mdp, const TabularPolicy& pi) {
  check_shapes(mdp, pi);
  int S = mdp.num_states, A = mdp.num_actions;
  Eigen::MatrixXd P = policy_transition(mdp, pi);
  Eigen::VectorXd r_pi(S);
  for (int s = 0; s < S; ++s) {
    double acc = 0.0;
    for (int a = 0; a < A; ++a) acc += pi.prob(s, a) * mdp.r(s, a);
    r_pi(s) = acc;
  }

  Eigen::MatrixXd sys =
      Eigen::MatrixXd::Identity(S, S) - mdp.gamma * P;
  Eigen::VectorXd V = sys.partialPivLu().solve(r_pi);
  double residual = (sys * V - r_pi).lpNorm<Eigen::Infinity>();
  if (residual >= 1e-10)
    throw std::runtime_error("evaluate: Bellman solve residual too large");

  Eigen::VectorXd rho0(S);
  for (int s = 0; s < S; ++s) rho0(s) = mdp.rho0[static_cast<std::size_t>(s)];
  Eigen::MatrixXd sys_t =
      Eigen::MatrixXd::Identity(S, S) - mdp.gamma * P.transpose();
  Eigen::VectorXd rho = sys_t.partialPivLu().solve((1.0 - mdp.gamma) * rho0);

  ExactEvaluation out;
  out.V.resize(static_cast<std::size_t>(S));
  out.rho.resize(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    out.V[static_cast<std::size_t>(s)] = V(s);
    out.rho[static_cast<std::size_t>(s)] = rho(s);
  }
  out.Q.resize(static_cast<std::size_t>(S) * A);
  out.Adv.resize(static_cast<std::size_t>(S) * A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double q = mdp.r(s, a);
      for (int s2 = 0; s2 < S; ++s2) q += mdp.gamma * mdp.p(s, a, s2) * V(s2);
      out.Q[static_cast<std::size_t>(s) * A + a] = q;
      out.Adv[static_cast<std::size_t>(s) * A + a] = q - V(s);
    }
  out.eta = rho0.dot(V);
  return out;
}

PerformanceDifference performance_difference(const TabularMDP& mdp,
                                             const TabularPolicy& pi_new,
                                             const TabularPolicy& pi_old) {
  ExactEvaluation en = evaluate(mdp, pi_new);
  ExactEvaluation eo = evaluate(mdp, pi_old);
  int S = mdp.num_states, A = mdp.num_actions;
  double acc = 0.0;
  for (int s = 0; s < S; ++s) {
    double row = 0.0;
    for (int a = 0; a < A; ++a) row += pi_new.prob(s, a) * eo.adv(s, a, A);
    acc += en.rho[static_cast<std::size_t>(s)] * row;
  }
  return {en.eta - eo.eta, acc / (1.0 - mdp.gamma)};
}

double tv_at_state(const TabularPolicy& a, const TabularPolicy& b, int s) {
  double acc = 0.0;
  for (int i = 0; i < a.num_actions; ++i)
    acc += std::abs(a.prob(s, i) - b.prob(s, i));
  return 0.5 * acc;
}

double mean_tv(const std::vector<double>& rho, const TabularPolicy& a,
               const TabularPolicy& b) {
  double acc = 0.0;
  for (int s = 0; s < a.num_states; ++s)
    acc += rho[static_cast<std::size_t>(s)] * tv_at_state(a, b, s);
  return acc;
}

double max_tv(const TabularPolicy& a, const TabularPolicy& b) {
  double m = 0.0;
  for (int s = 0; s < a.num_states; ++s)
    m = std::max(m, tv_at_state(a, b, s));
  return m;
}

double visitation_l1_gap(const TabularMDP& mdp, const TabularPolicy& pi_new,
                         const TabularPolicy& pi_old) {
  ExactEvaluation en = evaluate(mdp, pi_new);
  ExactEvaluation eo = evaluate(mdp, pi_old);
  double acc = 0.0;
  for (int s = 0; s < mdp.num_states; ++s)
    acc += std::abs(en.rho[static_cast<std::size_t>(s)] -
                    eo.rho[static_cast<std::size_t>(s)]);
  return acc;
}

BoundReport anchor_advantage_bound(const TabularMDP& mdp,
                                   const TabularPolicy& pi_k,
                                   const TabularPolicy& pi,
                                   const TabularPolicy& mu) {
  ExactEvaluation ek = evaluate(mdp, pi_k);
  ExactEvaluation ep = evaluate(mdp, pi);
  ExactEvaluation em = evaluate(mdp, mu);

  BoundReport rep;
  rep.lhs = ep.eta - ek.eta;
  rep.surrogate = importance_surrogate(mdp, ek, mu, pi, em);
  rep.epsilon = max_abs_adv(ek);
  rep.tv_mean_behavior_candidate = mean_tv(em.rho, mu, pi);
  rep.tv_max_behavior_candidate = max_tv(mu, pi);
  rep.tv_max_anchor_candidate = max_tv(pi_k, pi);
  rep.tv_max_behavior_anchor = max_tv(mu, pi_k);
  double g = mdp.gamma;
  rep.shift_penalty = 4.0 * rep.epsilon * g / ((1.0 - g) * (1.0 - g)) *
                      rep.tv_max_anchor_candidate *
                      rep.tv_mean_behavior_candidate;
  rep.staleness_penalty = 0.0;
  rep.rhs = rep.surrogate - rep.shift_penalty;
  rep.satisfied = rep.lhs >= rep.rhs - kBoundSlack;
  return rep;
}

BoundReport behavior_advantage_bound(const TabularMDP& mdp,
                                     const TabularPolicy& pi_k,
                                     const TabularPolicy& pi,
                                     const TabularPolicy& mu) {
  ExactEvaluation ek = evaluate(mdp, pi_k);
  ExactEvaluation ep = evaluate(mdp, pi);
  ExactEvaluation em = evaluate(mdp, mu);

  BoundReport rep;
  rep.lhs = ep.eta - ek.eta;
  rep.surrogate = importance_surrogate(mdp, em, mu, pi, em);
  rep.epsilon = max_abs_adv(em);
  rep.tv_mean_behavior_candidate = mean_tv(em.rho, mu, pi);
  rep.tv_max_behavior_candidate = max_tv(mu, pi);
  rep.tv_max_anchor_candidate = max_tv(pi_k, pi);
  rep.tv_max_behavior_anchor = max_tv(mu, pi_k);
  double g = mdp.gamma;
  double denom = (1.0 - g) * (1.0 - g);
  rep.staleness_penalty =
      2.0 * (1.0 + g) * rep.epsilon / denom * rep.tv_max_behavior_anchor;
  rep.shift_penalty = 4.0 * rep.epsilon * g / denom *
                      rep.tv_max_behavior_candidate *
                      rep.tv_mean_behavior_candidate;
  rep.rhs = rep.surrogate - rep.staleness_penalty - rep.shift_penalty;
  rep.satisfied = rep.lhs >= rep.rhs - kBoundSlack;
  return rep;
}

double trust_region_objective(const TabularMDP& mdp, const TabularPolicy& pi_k,
                              const ExactEvaluation& eval_k,
                              const TabularPolicy& pi) {
  int S = mdp.num_states, A = mdp.num_actions;
  double surr = 0.0;
  for (int s = 0; s < S; ++s) {
    double row = 0.0;
    for (int a = 0; a < A; ++a) row += pi.prob(s, a) * eval_k.adv(s, a, A);
    surr += eval_k.rho[static_cast<std::size_t>(s)] * row;
  }
  surr /= (1.0 - mdp.gamma);
  double eps = max_abs_adv(eval_k);
  double coef =
      4.0 * eps * mdp.gamma / ((1.0 - mdp.gamma) * (1.0 - mdp.gamma));
  return surr - coef * max_tv(pi_k, pi) * mean_tv(eval_k.rho, pi_k, pi);
}

TrustRegionMax maximize_trust_region(const TabularMDP& mdp,
                                     const TabularPolicy& pi_k,
                                     std::mt19937_64& rng, int iterations,
                                     double step, int restarts) {
  check_shapes(mdp, pi_k);
  ExactEvaluation ek = evaluate(mdp, pi_k);
  int S = mdp.num_states, A = mdp.num_actions;
  double eps = max_abs_adv(ek);
  double coef =
      4.0 * eps * mdp.gamma / ((1.0 - mdp.gamma) * (1.0 - mdp.gamma));

  TrustRegionMax best;
  best.pi_next = pi_k;
  best.objective = 0.0;  // objective at pi_k itself

  // the penalty coefficient dwarfs the surrogate slope, so the positive
  // region hugs pi_k; each ascent step backtracks until it actually helps
  for (int attempt = 0; attempt <= restarts; ++attempt) {
    TabularPolicy pi = attempt == 0
                           ? pi_k
                           : mix_policies(pi_k, random_tabular_policy(mdp, rng),
                                          0.5 / (1.0 + coef));
    double obj = trust_region_objective(mdp, pi_k, ek, pi);
    for (int it = 0; it < iterations; ++it) {
      // subgradient of the surrogate
      std::vector<double> grad(static_cast<std::size_t>(S) * A, 0.0);
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
          grad[static_cast<std::size_t>(s) * A + a] =
              ek.rho[static_cast<std::size_t>(s)] * ek.adv(s, a, A) /
              (1.0 - mdp.gamma);
      // subgradient of max_s TV * mean TV
      double mtv = mean_tv(ek.rho, pi_k, pi);
      double xtv = 0.0;
      int argmax_s = 0;
      for (int s = 0; s < S; ++s) {
        double t = tv_at_state(pi_k, pi, s);
        if (t > xtv) {
          xtv = t;
          argmax_s = s;
        }
      }
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
          double diff = pi.prob(s, a) - pi_k.prob(s, a);
          double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
          double g = 0.0;
          g += xtv * ek.rho[static_cast<std::size_t>(s)] * 0.5 * sign;
          if (s == argmax_s) g += mtv * 0.5 * sign;
          grad[static_cast<std::size_t>(s) * A + a] -= coef * g;
        }
      bool advanced = false;
      for (int half = 0; half < 45 && !advanced; ++half) {
        double stride = step * std::ldexp(1.0, -half);
        TabularPolicy trial = pi;
        for (int s = 0; s < S; ++s) {
          for (int a = 0; a < A; ++a)
            trial.prob(s, a) +=
                stride * grad[static_cast<std::size_t>(s) * A + a];
          project_simplex(&trial.pi[static_cast<std::size_t>(s) * A], A);
        }
        double tobj = trust_region_objective(mdp, pi_k, ek, trial);
        if (tobj > obj) {
          pi = trial;
          obj = tobj;
          advanced = true;
        }
      }
      if (!advanced) break;  // no productive step left in any scale
    }
    if (obj > best.objective) {
      best.pi_next = pi;
      best.objective = obj;
    }
    if (best.objective > 0) break;
  }
  best.positive = best.objective > 0;
  return best;
}

MonotonicCheck monotonic_improvement_check(
    const TabularMDP& mdp, const TabularPolicy& pi_k,
    const std::vector<TabularPolicy>& behavior_candidates,
    std::mt19937_64& rng) {
  MonotonicCheck out;
  out.maximizer = maximize_trust_region(mdp, pi_k, rng);
  for (const TabularPolicy& mu : behavior_candidates) {
    BoundReport rep = behavior_advantage_bound(mdp, pi_k, out.maximizer.pi_next, mu);
    ExactEvaluation em = evaluate(mdp, mu);
    MonotonicCheck::PerBehavior pb;
    pb.distance_to_anchor = mean_tv(em.rho, mu, pi_k);
    pb.bound_value = rep.rhs;
    pb.positive = rep.rhs > 0;
    if (pb.positive)
      out.max_passing_alpha = std::max(out.max_passing_alpha, pb.distance_to_anchor);
    out.behaviors.push_back(pb);
  }
  return out;
}

TruncatedFixedPoint vtrace_fixed_point(const TabularMDP& mdp,
                                       const TabularPolicy& pi,
                                       const TabularPolicy& mu, double rho_bar,
                                       double c_bar) {
  check_shapes(mdp, pi);
  check_shapes(mdp, mu);
  if (!(rho_bar >= c_bar) || !(c_bar > 0))
    throw std::invalid_argument(
        "vtrace_fixed_point: need rho_bar >= c_bar > 0");
  TruncatedFixedPoint out;
  out.pi_rho.num_states = mdp.num_states;
  out.pi_rho.num_actions = mdp.num_actions;
  out.pi_rho.pi.resize(static_cast<std::size_t>(mdp.num_states) *
                       mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s) {
    double z = 0.0;
    for (int a = 0; a < mdp.num_actions; ++a) {
      double w = std::min(rho_bar * mu.prob(s, a), pi.prob(s, a));
      out.pi_rho.prob(s, a) = w;
      z += w;
    }
    if (z <= 0.0)
      throw std::invalid_argument(
          "vtrace_fixed_point: truncated weights vanish at a state");
    for (int a = 0; a < mdp.num_actions; ++a) out.pi_rho.prob(s, a) /= z;
  }
  out.V = evaluate(mdp, out.pi_rho).V;
  return out;
}

ValueImprovementCheck ppo_value_improvement_check(const TabularMDP& mdp,
                                                  const TabularPolicy& pi_k,
                                                  const TabularPolicy& pi_next) {
  ExactEvaluation ek = evaluate(mdp, pi_k);
  ExactEvaluation en = evaluate(mdp, pi_next);
  int S = mdp.num_states, A = mdp.num_actions;
  ValueImprovementCheck out;
  for (int s = 0; s < S; ++s) {
    double row = 0.0;
    for (int a = 0; a < A; ++a) row += pi_next.prob(s, a) * ek.adv(s, a, A);
    out.linear_term += ek.rho[static_cast<std::size_t>(s)] * row;
    out.mean_value_before += ek.rho[static_cast<std::size_t>(s)] *
                             ek.V[static_cast<std::size_t>(s)];
    out.mean_value_after += ek.rho[static_cast<std::size_t>(s)] *
                            en.V[static_cast<std::size_t>(s)];
  }
  out.hypothesis_holds = out.linear_term >= 0.0;
  out.improved = out.mean_value_after >= out.mean_value_before - kBoundSlack;
  return out;
}

TabularPolicy clipped_update(const TabularPolicy& pi_k,
                             const ExactEvaluation& eval_k, double epsilon) {
  if (epsilon <= 0.0)
    throw std::invalid_argument("clipped_update: epsilon must be positive");
  int S = pi_k.num_states, A = pi_k.num_actions;
  TabularPolicy out = pi_k;
  for (int s = 0; s < S; ++s) {
    std::vector<int> order(static_cast<std::size_t>(A));
    for (int a = 0; a < A; ++a) order[static_cast<std::size_t>(a)] = a;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return eval_k.adv(s, a, A) > eval_k.adv(s, b, A);
    });
    bool any_positive = eval_k.adv(s, order[0], A) > 0.0;
    if (!any_positive) continue;  // pi_k already maximal at this state
    double remaining = 1.0;
    for (int a = 0; a < A; ++a) out.prob(s, a) = 0.0;
    for (int idx : order) {
      if (eval_k.adv(s, idx, A) <= 0.0) break;
      double cap = (1.0 + epsilon) * pi_k.prob(s, idx);
      double take = std::min(cap, remaining);
      out.prob(s, idx) = take;
      remaining -= take;
      if (remaining <= 0.0) break;
    }
    if (remaining > 0.0) out.prob(s, order[0]) += remaining;
  }
  out.validate();
  return out;
}

}  // namespace toppo
