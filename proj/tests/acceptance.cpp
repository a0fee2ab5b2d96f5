// Release gate: every numbered check prints one PASS/FAIL line and the
// process exits nonzero if any check failed. --only=3,7 restricts the run,
// --seeds=K shrinks the training fan-out for smoke use (the gate uses 10).
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fd_check.hpp"
#include "toppo/experiment.hpp"
#include "toppo/objectives.hpp"
#include "toppo/policy.hpp"
#include "toppo/policy_buffer.hpp"
#include "toppo/rng.hpp"
#include "toppo/tabular.hpp"
#include "toppo/tabular_oracle.hpp"
#include "toppo/trainer.hpp"

using namespace toppo;

namespace {

int g_pass = 0;
int g_fail = 0;

void report(int id, const char* label, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", id, label,
              detail.c_str());
  std::fflush(stdout);
  (ok ? g_pass : g_fail) += 1;
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v, double m) {
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size());
}

// ---- shared training runs -------------------------------------------------

enum class Variant { FullToppo, FullPpo, FullNoSelect, ReduceToppo, ReducePpo };

struct RunKey {
  Variant v;
  std::uint64_t seed;
  bool operator<(const RunKey& o) const {
    if (v != o.v) return v < o.v;
    return seed < o.seed;
  }
};

std::map<RunKey, TrainResult> g_runs;
std::mutex g_runs_mu;

TrainConfig config_for(Variant v, std::uint64_t seed) {
  TrainConfig c;  // stock cart-pole settings
  c.seed = seed;
  switch (v) {
    case Variant::FullToppo:
    case Variant::FullPpo:
      break;
    case Variant::FullNoSelect:
      c.disable_selection = true;
      break;
    case Variant::ReduceToppo:
    case Variant::ReducePpo:
      // one stored batch, schedule on, so both arms resolve the same width
      c.total_timesteps = 52 * 1024;
      c.buffer_capacity = 1;
      c.adaptive_epsilon = true;
      break;
  }
  return c;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::FullToppo: return "toppo";
    case Variant::FullPpo: return "ppo";
    case Variant::FullNoSelect: return "toppo-noselect";
    case Variant::ReduceToppo: return "toppo-n1";
    case Variant::ReducePpo: return "ppo-n1";
  }
  return "?";
}

TrainResult execute(const RunKey& k) {
  TrainConfig c = config_for(k.v, k.seed);
  if (k.v == Variant::FullPpo || k.v == Variant::ReducePpo) return run_ppo(c);
  return run_toppo(c);
}

void prefetch(const std::set<RunKey>& wanted) {
  std::vector<RunKey> todo;
  for (const RunKey& k : wanted)
    if (!g_runs.count(k)) todo.push_back(k);
  if (todo.empty()) return;

  int threads = 1;
  if (const char* env = std::getenv("TOPPO_THREADS"))
    threads = std::max(1, std::atoi(env));
  threads = std::min<int>(threads, static_cast<int>(todo.size()));

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto worker = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      try {
        TrainResult r = execute(todo[i]);
        std::lock_guard<std::mutex> lock(g_runs_mu);
        std::fprintf(stderr, "[acceptance] %s seed %llu done (%zu iterations)\n",
                     variant_name(todo[i].v),
                     static_cast<unsigned long long>(todo[i].seed),
                     r.metrics.size());
        g_runs.emplace(todo[i], std::move(r));
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        next.store(todo.size());
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

const TrainResult& run_for(Variant v, std::uint64_t seed) {
  RunKey k{v, seed};
  auto it = g_runs.find(k);
  if (it == g_runs.end()) {
    prefetch({k});
    it = g_runs.find(k);
  }
  return it->second;
}

// ---- tabular instance generator -------------------------------------------

TabularMDP fuzz_instance(std::mt19937_64& rng, int index) {
  const double gammas[] = {0.8, 0.9, 0.95, 0.99};
  int S = 2 + static_cast<int>(rng() % 4);
  int A = 2 + static_cast<int>(rng() % 2);
  return random_mdp(rng(), S, A, gammas[index % 4]);
}

// ---- 1: clip width schedule ------------------------------------------------

void check_schedule() {
  double worst = std::fabs(clip_epsilon_for(0.2, 5) - 4.0 / 45.0);
  worst = std::max(worst, std::fabs(clip_epsilon_for(0.2, 1) - 0.2));
  bool monotone = true;
  for (int n = 1; n < 50; ++n)
    if (!(clip_epsilon_for(0.2, n + 1) < clip_epsilon_for(0.2, n)))
      monotone = false;
  std::ostringstream os;
  os << "width(5)=" << num(clip_epsilon_for(0.2, 5)) << ", worst formula gap "
     << num(worst) << ", strictly decreasing over 1..50: "
     << (monotone ? "yes" : "no");
  report(1, "adaptive clip width schedule", worst <= 1e-12 && monotone,
         os.str());
}

// ---- 2: exact return gap identity ------------------------------------------

void check_identity() {
  std::mt19937_64 rng(20260822u);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    TabularMDP mdp = fuzz_instance(rng, i);
    TabularPolicy pi_new = random_tabular_policy(mdp, rng);
    TabularPolicy pi_old = random_tabular_policy(mdp, rng);
    PerformanceDifference pd = performance_difference(mdp, pi_new, pi_old);
    worst = std::max(worst, std::fabs(pd.gap - pd.advantage_form));
  }
  report(2, "exact return gap identity", worst <= 1e-9,
         "1000 instances, worst |gap - advantage form| = " + num(worst));
}

// ---- 3: surrogate lower bounds ---------------------------------------------

void check_bounds() {
  std::mt19937_64 rng(30303u);
  int violations = 0;
  double min_margin = 1e300;
  double agree_worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    TabularMDP mdp = fuzz_instance(rng, i);
    TabularPolicy pi_k = random_tabular_policy(mdp, rng);
    TabularPolicy pi = random_tabular_policy(mdp, rng);
    TabularPolicy mu = random_tabular_policy(mdp, rng);

    BoundReport a = anchor_advantage_bound(mdp, pi_k, pi, mu);
    BoundReport b = behavior_advantage_bound(mdp, pi_k, pi, mu);
    for (double margin : {a.lhs - a.rhs, b.lhs - b.rhs}) {
      min_margin = std::min(min_margin, margin);
      if (margin < -1e-9) violations += 1;
    }

    // fresh behavior: both bounds collapse to the same statement
    BoundReport c = anchor_advantage_bound(mdp, pi_k, pi, pi_k);
    BoundReport d = behavior_advantage_bound(mdp, pi_k, pi, pi_k);
    agree_worst = std::max({agree_worst, std::fabs(c.lhs - d.lhs),
                            std::fabs(c.rhs - d.rhs)});
  }
  std::ostringstream os;
  os << "1000 instances x 2 bounds, violations " << violations
     << ", smallest margin " << num(min_margin)
     << ", fresh-behavior agreement gap " << num(agree_worst);
  report(3, "surrogate lower bounds", violations == 0 && agree_worst <= 1e-9,
         os.str());
}

// ---- 4: nonnegative surrogate implies value improvement --------------------

void check_improvement() {
  std::mt19937_64 rng(40404u);
  int checked = 0;
  int attempts = 0;
  double worst = 1e300;
  while (checked < 1000 && attempts < 2000) {
    attempts += 1;
    TabularMDP mdp = fuzz_instance(rng, attempts);
    TabularPolicy pi_k = random_tabular_policy(mdp, rng);
    ExactEvaluation ek = evaluate(mdp, pi_k);
    TabularPolicy best = clipped_update(pi_k, ek, 0.2);
    double tau = uniform_real(rng, 0.0, 1.0);
    ValueImprovementCheck vic =
        ppo_value_improvement_check(mdp, pi_k, mix_policies(pi_k, best, tau));
    if (!vic.hypothesis_holds) continue;  // surrogate rounded to exactly zero
    checked += 1;
    worst = std::min(worst, vic.mean_value_after - vic.mean_value_before);
  }
  std::ostringstream os;
  os << checked << " qualifying pairs, smallest mean value gain " << num(worst);
  report(4, "nonnegative surrogate implies value improvement",
         checked == 1000 && worst >= -1e-10, os.str());
}

// ---- 5: truncated importance weighting bias fixture ------------------------

void check_bias_fixture() {
  TabularMDP mdp = off_policy_gap_mdp();
  TabularPolicy mu = gap_behavior(0.01);
  TabularPolicy pi = gap_target(0.01);
  TruncatedFixedPoint fp = vtrace_fixed_point(mdp, pi, mu, 1.0, 1.0);
  ExactEvaluation truth = evaluate(mdp, pi);

  double uniform_gap = 0.0;
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      uniform_gap = std::max(uniform_gap, std::fabs(fp.pi_rho.prob(s, a) - 0.5));

  double v_gap = 0.0, v_scale = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    v_gap = std::max(v_gap, std::fabs(fp.V[static_cast<std::size_t>(s)] -
                                      truth.V[static_cast<std::size_t>(s)]));
    v_scale = std::max(v_scale, std::fabs(truth.V[static_cast<std::size_t>(s)]));
  }
  double rel = v_gap / v_scale;
  std::ostringstream os;
  os << "blended policy off uniform by " << num(uniform_gap)
     << ", relative value gap " << num(rel);
  report(5, "truncated importance weighting bias fixture",
         uniform_gap <= 1e-6 && rel > 0.1, os.str());
}

// ---- 6: single-snapshot run matches the one-batch baseline -----------------

void check_reduction() {
  const TrainResult& t = run_for(Variant::ReduceToppo, 0);
  const TrainResult& p = run_for(Variant::ReducePpo, 0);
  int mismatches = 0;
  bool shape_ok = t.metrics.size() == p.metrics.size() &&
                  t.metrics.size() >= 50 && t.evals.size() == p.evals.size();
  if (shape_ok) {
    for (std::size_t i = 0; i < t.metrics.size(); ++i) {
      const IterationMetrics& a = t.metrics[i];
      const IterationMetrics& b = p.metrics[i];
      bool same = a.iteration == b.iteration && a.env_steps == b.env_steps &&
                  a.mean_episode_return == b.mean_episode_return &&
                  a.policy_loss == b.policy_loss &&
                  a.value_loss == b.value_loss && a.mean_kl == b.mean_kl &&
                  a.clip_fraction == b.clip_fraction &&
                  a.buffer_size == b.buffer_size && a.epsilon == b.epsilon &&
                  a.behavior_snapshot == b.behavior_snapshot &&
                  a.deletions == b.deletions;
      if (!same) mismatches += 1;
    }
    for (std::size_t i = 0; i < t.evals.size(); ++i) {
      const EvalRecord& a = t.evals[i];
      const EvalRecord& b = p.evals[i];
      if (!(a.iteration == b.iteration && a.env_steps == b.env_steps &&
            a.mean_return == b.mean_return))
        mismatches += 1;
    }
  }
  std::ostringstream os;
  os << t.metrics.size() << " iterations, bitwise row mismatches "
     << mismatches;
  report(6, "single-snapshot run matches the one-batch baseline",
         shape_ok && mismatches == 0, os.str());
}

// ---- 7: staleness filter invariant over a full run -------------------------

void check_filter_invariant() {
  const TrainResult& r = run_for(Variant::FullToppo, 0);
  int kept_over = 0;
  double max_kept = 0.0;
  for (const SelectionLogRow& row : r.selection_log) {
    if (row.record.deleted) continue;
    max_kept = std::max(max_kept, row.record.divergence);
    if (row.record.divergence > 0.03) kept_over += 1;
  }
  bool size_ok = true;
  int lo = 1 << 30, hi = 0, deletions = 0;
  for (const IterationMetrics& m : r.metrics) {
    if (m.buffer_size < 1 || m.buffer_size > 5) size_ok = false;
    deletions += m.deletions;
    if (m.iteration >= 5) {  // past the fill-up ramp
      lo = std::min(lo, m.buffer_size);
      hi = std::max(hi, m.buffer_size);
    }
  }
  bool dynamic = lo != hi;
  std::ostringstream os;
  os << r.metrics.size() << " iterations, retained entries over the filter "
     << kept_over << ", max retained divergence " << num(max_kept)
     << ", set size range after fill-up [" << lo << ", " << hi << "], "
     << deletions << " deletions";
  report(7, "staleness filter invariant over a full run",
         kept_over == 0 && size_ok && dynamic, os.str());
}

// ---- 8: cart-pole learning with non-inferior final returns -----------------

int g_seed_count = 10;

void check_learning() {
  std::vector<double> ft, fp_;
  int reached = 0;
  for (int s = 0; s < g_seed_count; ++s) {
    const TrainResult& r = run_for(Variant::FullToppo, s);
    bool hit = false;
    for (const EvalRecord& e : r.evals)
      if (e.mean_return >= 450.0) hit = true;
    if (hit) reached += 1;
    ft.push_back(final_return(r));
  }
  for (int s = 0; s < g_seed_count; ++s)
    fp_.push_back(final_return(run_for(Variant::FullPpo, s)));

  double mt = mean_of(ft), mp = mean_of(fp_);
  double pooled = std::sqrt((var_of(ft, mt) + var_of(fp_, mp)) / 2.0);
  int need = (g_seed_count * 8 + 9) / 10;  // 8 of 10, scaled for smoke runs
  bool ok = reached >= need && mt >= mp - pooled;
  std::ostringstream os;
  os << reached << "/" << g_seed_count << " seeds reach 450; final returns "
     << num(mt) << " vs baseline " << num(mp) << ", pooled std "
     << num(pooled);
  report(8, "cart-pole learning with non-inferior final returns", ok,
         os.str());
}

// ---- 9: removing the staleness filter does not help ------------------------

void check_ablation() {
  std::vector<double> sel, ns;
  long sel_deletions = 0;
  bool ns_clean = true;
  for (int s = 0; s < g_seed_count; ++s) {
    const TrainResult& a = run_for(Variant::FullToppo, s);
    sel.push_back(final_return(a));
    for (const IterationMetrics& m : a.metrics) sel_deletions += m.deletions;

    const TrainResult& b = run_for(Variant::FullNoSelect, s);
    ns.push_back(final_return(b));
    if (!b.selection_log.empty()) ns_clean = false;
    for (const IterationMetrics& m : b.metrics)
      if (m.deletions != 0) ns_clean = false;
  }
  double ms = mean_of(sel), mn = mean_of(ns);
  double pooled = std::sqrt((var_of(sel, ms) + var_of(ns, mn)) / 2.0);
  bool ok = mn <= ms + pooled && sel_deletions > 0 && ns_clean;
  std::ostringstream os;
  os << "filtered " << num(ms) << " vs unfiltered " << num(mn)
     << ", pooled std " << num(pooled) << ", filtered-arm deletions "
     << sel_deletions << ", unfiltered deletion log empty: "
     << (ns_clean ? "yes" : "no");
  report(9, "removing the staleness filter does not help", ok, os.str());
}

// ---- 10: analytic gradients match finite differences -----------------------

double lp_at(const ActionDistribution& d, const UpdateBatch& b, int i,
             const PolicyParams& net) {
  if (net.family == ActionFamily::Categorical)
    return log_prob(d, b.actions[static_cast<std::size_t>(i)]);
  std::vector<double> a(static_cast<std::size_t>(net.act_dim));
  for (int dd = 0; dd < net.act_dim; ++dd)
    a[static_cast<std::size_t>(dd)] = b.actions_cont.at(i, dd);
  return log_prob(d, a);
}

// Batch sampled from a behavior net; half the rows get their stored density
// rewritten so the live ratio lands a hair inside or outside a clip edge.
UpdateBatch boundary_batch(const PolicyParams& behavior,
                           const PolicyParams& live,
                           const PolicyParams* anchor, double eps, int B,
                           std::mt19937_64& rng) {
  UpdateBatch b;
  b.obs = Tensor::zeros({B, behavior.obs_dim});
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : b.obs.data) v = u(rng);
  std::vector<ActionDistribution> dists = policy_distributions(behavior, b.obs);
  if (behavior.family == ActionFamily::Gaussian)
    b.actions_cont = Tensor::zeros({B, behavior.act_dim});
  for (int i = 0; i < B; ++i) {
    if (behavior.family == ActionFamily::Categorical) {
      int a = sample_action(dists[static_cast<std::size_t>(i)], rng);
      b.actions.push_back(a);
      b.behavior_log_probs.push_back(
          log_prob(dists[static_cast<std::size_t>(i)], a));
    } else {
      std::vector<double> a =
          sample_action_vec(dists[static_cast<std::size_t>(i)], rng);
      for (int d = 0; d < behavior.act_dim; ++d)
        b.actions_cont.at(i, d) = a[static_cast<std::size_t>(d)];
      b.behavior_log_probs.push_back(
          log_prob(dists[static_cast<std::size_t>(i)], a));
    }
    b.behavior_dists.push_back(dists[static_cast<std::size_t>(i)]);
    b.advantages.push_back(u(rng));
    b.value_targets.push_back(u(rng));
  }

  std::vector<ActionDistribution> ld = policy_distributions(live, b.obs);
  std::vector<ActionDistribution> ad =
      anchor ? policy_distributions(*anchor, b.obs) : ld;
  for (int i = 0; i < B; i += 2) {
    double L = lp_at(ld[static_cast<std::size_t>(i)], b, i, live);
    // offset far above the finite-difference drift, far below the width
    double q = (i % 4 == 0) ? 1.0 - 1e-3 : 1.0 + 1e-3;
    if (!anchor) {
      double edge = (i % 8 < 4) ? 1.0 + eps : 1.0 - eps;
      b.behavior_log_probs[static_cast<std::size_t>(i)] =
          L - std::log(edge * q);
      continue;
    }
    double K = lp_at(ad[static_cast<std::size_t>(i)], b, i, live);
    double m = std::exp(L - K);  // ratio of live to anchor density
    double center;               // anchor ratio putting the edge at target
    if (m > 1.002)
      center = eps * q / (m - q);
    else if (m < 0.998)
      center = eps * q / (q - m);
    else
      continue;  // live and anchor nearly tied here, leave the row sampled
    if (center < 0.02 || center > 50.0) continue;
    b.behavior_log_probs[static_cast<std::size_t>(i)] = K - std::log(center);
  }
  return b;
}

double objective_of(const PolicyParams& proto, const UpdateBatch& batch,
                    const PolicyParams* anchor, double eps, double coef,
                    bool unfloored, const std::vector<Tensor>& ps) {
  PolicyParams live = proto;
  auto ts = live.tensors();
  for (std::size_t i = 0; i < ps.size(); ++i) *ts[i] = ps[i];
  std::vector<Tensor> grads;
  LossBreakdown lb =
      anchor
          ? (unfloored ? geppo_loss(live, batch, *anchor, eps, coef, grads)
                       : toppo_loss(live, batch, *anchor, eps, coef, grads))
          : ppo_loss(live, batch, eps, coef, grads);
  return lb.policy_objective + coef * lb.entropy;
}

void check_gradients() {
  std::mt19937_64 rng(9090u);
  const double eps = 0.2, coef = 0.01;
  double worst = 0.0, clip_acc = 0.0;
  int evals = 0;
  for (int e = 0; e < 100; ++e) {
    ActionFamily fam =
        (e % 2) ? ActionFamily::Gaussian : ActionFamily::Categorical;
    int mode = fam == ActionFamily::Categorical ? (e / 2) % 3 : (e / 2) % 2;
    PolicyParams behavior = make_policy(fam, 3, 2, 6, 6, rng);
    PolicyParams live = make_policy(fam, 3, 2, 6, 6, rng);
    PolicyParams anchor_net = make_policy(fam, 3, 2, 6, 6, rng);
    const PolicyParams* anc = mode == 0 ? nullptr : &anchor_net;

    UpdateBatch batch = boundary_batch(behavior, live, anc, eps, 12, rng);
    std::vector<Tensor> analytic;
    LossBreakdown lb =
        anc ? (mode == 2 ? geppo_loss(live, batch, *anc, eps, coef, analytic)
                         : toppo_loss(live, batch, *anc, eps, coef, analytic))
            : ppo_loss(live, batch, eps, coef, analytic);
    clip_acc += lb.clip_fraction;

    std::vector<Tensor> params;
    for (Tensor* t : live.tensors()) params.push_back(*t);
    double err = testutil::max_rel_error(
        params,
        [&](const std::vector<Tensor>& ps) {
          return objective_of(live, batch, anc, eps, coef, mode == 2, ps);
        },
        analytic);
    worst = std::max(worst, err);
    evals += 1;
  }
  std::ostringstream os;
  os << evals << " evaluations, worst relative error " << num(worst)
     << ", mean clip fraction " << num(clip_acc / evals);
  report(10, "analytic gradients match finite differences",
         evals == 100 && worst < 1e-4, os.str());
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const char* a = argv[i];
    if (std::strncmp(a, "--only=", 7) == 0) {
      std::stringstream ss(a + 7);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::atoi(tok.c_str()));
    } else if (std::strncmp(a, "--seeds=", 8) == 0) {
      g_seed_count = std::max(1, std::atoi(a + 8));
    } else if (std::strcmp(a, "--help") == 0) {
      std::printf("usage: acceptance [--only=1,2,...] [--seeds=K]\n");
      return 0;
    } else {
      std::fprintf(stderr, "unknown argument: %s\n", a);
      return 2;
    }
  }
  auto enabled = [&](int id) { return only.empty() || only.count(id) > 0; };

  try {
    std::set<RunKey> wanted;
    if (enabled(6)) {
      wanted.insert({Variant::ReduceToppo, 0});
      wanted.insert({Variant::ReducePpo, 0});
    }
    if (enabled(7)) wanted.insert({Variant::FullToppo, 0});
    for (int s = 0; s < g_seed_count; ++s) {
      if (enabled(8)) {
        wanted.insert({Variant::FullToppo, static_cast<std::uint64_t>(s)});
        wanted.insert({Variant::FullPpo, static_cast<std::uint64_t>(s)});
      }
      if (enabled(9)) {
        wanted.insert({Variant::FullToppo, static_cast<std::uint64_t>(s)});
        wanted.insert({Variant::FullNoSelect, static_cast<std::uint64_t>(s)});
      }
    }
    prefetch(wanted);

    if (enabled(1)) check_schedule();
    if (enabled(2)) check_identity();
    if (enabled(3)) check_bounds();
    if (enabled(4)) check_improvement();
    if (enabled(5)) check_bias_fixture();
    if (enabled(6)) check_reduction();
    if (enabled(7)) check_filter_invariant();
    if (enabled(8)) check_learning();
    if (enabled(9)) check_ablation();
    if (enabled(10)) check_gradients();
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "acceptance aborted: %s\n", ex.what());
    return 3;
  }

  std::printf("%d of %d criteria passed\n", g_pass, g_pass + g_fail);
  return g_fail == 0 ? 0 : 1;
}
