#include "toppo/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "toppo/rng.hpp"
#include "toppo/tabular.hpp"
#include "toppo/tabular_oracle.hpp"

namespace toppo {

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<IterationMetrics>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iteration,env_steps,mean_episode_return,policy_loss,value_loss,"
         "mean_kl,clip_fraction,buffer_size,epsilon,behavior_snapshot,"
         "deletions\n";
  for (const IterationMetrics& m : rows) {
    out << m.iteration << ',' << m.env_steps << ','
        << fmt(m.mean_episode_return) << ',' << fmt(m.policy_loss) << ','
        << fmt(m.value_loss) << ',' << fmt(m.mean_kl) << ','
        << fmt(m.clip_fraction) << ',' << m.buffer_size << ','
        << fmt(m.epsilon) << ',' << m.behavior_snapshot << ',' << m.deletions
        << '\n';
  }
}

void write_eval_csv(const std::string& path,
                    const std::vector<EvalRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iteration,env_steps,mean_return\n";
  for (const EvalRecord& e : rows)
    out << e.iteration << ',' << e.env_steps << ',' << fmt(e.mean_return)
        << '\n';
}

void write_selection_csv(const std::string& path,
                         const std::vector<SelectionLogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iteration,snapshot_id,divergence,action\n";
  for (const SelectionLogRow& r : rows)
    out << r.iteration << ',' << r.record.snapshot_id << ','
        << fmt(r.record.divergence) << ','
        << (r.record.deleted ? "deleted" : "kept") << '\n';
}

int thread_budget() {
  const char* env = std::getenv("TOPPO_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  return n < 1 ? 1 : n;
}

}  // namespace

double final_return(const TrainResult& result) {
  if (result.evals.empty())
    throw std::invalid_argument("final_return: run has no evaluations");
  std::size_t n = std::min<std::size_t>(10, result.evals.size());
  double acc = 0.0;
  for (std::size_t i = result.evals.size() - n; i < result.evals.size(); ++i)
    acc += result.evals[i].mean_return;
  return acc / static_cast<double>(n);
}

int cmd_train(const ExperimentConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.out_dir);

  std::size_t runs = config.seeds.size();
  std::vector<TrainResult> results(runs);
  std::vector<std::exception_ptr> errors(runs);

  auto worker = [&](std::size_t i) {
    try {
      TrainConfig tc = config.train;
      tc.seed = config.seeds[i];
      if (config.algorithm == "toppo")
        results[i] = run_toppo(tc);
      else if (config.algorithm == "ppo")
        results[i] = run_ppo(tc);
      else
        results[i] = run_geppo(tc);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  int width = thread_budget();
  if (width <= 1 || runs <= 1) {
    for (std::size_t i = 0; i < runs; ++i) worker(i);
  } else {
    std::size_t next = 0;
    while (next < runs) {
      std::vector<std::thread> pool;
      for (int t = 0; t < width && next < runs; ++t, ++next)
        pool.emplace_back(worker, next);
      for (std::thread& th : pool) th.join();
    }
  }
  for (std::size_t i = 0; i < runs; ++i)
    if (errors[i]) std::rethrow_exception(errors[i]);

  std::vector<double> finals;
  for (std::size_t i = 0; i < runs; ++i) {
    std::string tag = "_seed" + std::to_string(config.seeds[i]);
    std::string base = config.out_dir + "/";
    write_metrics_csv(base + "metrics" + tag + ".csv", results[i].metrics);
    write_eval_csv(base + "eval" + tag + ".csv", results[i].evals);
    write_selection_csv(base + "selection" + tag + ".csv",
                        results[i].selection_log);
    save_policy(results[i].final_policy, base + "policy" + tag + ".tpsn");
    finals.push_back(final_return(results[i]));
  }

  double mean = 0.0;
  for (double f : finals) mean += f;
  mean /= static_cast<double>(finals.size());
  double var = 0.0;
  for (double f : finals) var += (f - mean) * (f - mean);
  var /= static_cast<double>(finals.size());

  nlohmann::json summary;
  summary["algorithm"] = config.algorithm;
  summary["env"] = config.train.env_id;
  summary["seeds"] = config.seeds;
  summary["final_returns"] = finals;
  summary["final_return_mean"] = mean;
  summary["final_return_std"] = std::sqrt(var);
  std::ofstream js(config.out_dir + "/summary.json");
  if (!js) throw std::runtime_error("cannot write summary.json");
  js << summary.dump(2) << "\n";
  return 0;
}

int cmd_fuzz_bounds(int count, int num_states, int num_actions, double gamma,
                    std::uint64_t seed, const std::string& out_csv) {
  if (count < 0) throw std::invalid_argument("fuzz: negative count");
  std::ofstream out(out_csv);
  if (!out) throw std::runtime_error("cannot write " + out_csv);
  out << "instance,check,lhs,rhs,margin,ok\n";

  RngSplitter splitter(seed);
  std::mt19937_64 rng = splitter.stream("fuzz");
  int violations = 0;
  const double tol = 1e-9;

  auto row = [&](int i, const char* check, double lhs, double rhs) {
    double margin = lhs - rhs;
    bool ok = margin >= -tol;
    if (!ok) violations += 1;
    out << i << ',' << check << ',' << fmt(lhs) << ',' << fmt(rhs) << ','
        << fmt(margin) << ',' << (ok ? 1 : 0) << '\n';
  };

  for (int i = 0; i < count; ++i) {
    TabularMDP mdp = random_mdp(rng(), num_states, num_actions, gamma);
    TabularPolicy pi_k = random_tabular_policy(mdp, rng);
    TabularPolicy pi = random_tabular_policy(mdp, rng);
    TabularPolicy mu = random_tabular_policy(mdp, rng);

    PerformanceDifference pd = performance_difference(mdp, pi, pi_k);
    row(i, "performance_difference", pd.advantage_form, pd.gap);
    row(i, "performance_difference_rev", pd.gap, pd.advantage_form);

    BoundReport anchor = anchor_advantage_bound(mdp, pi_k, pi, mu);
    row(i, "anchor_bound", anchor.lhs, anchor.rhs);
    BoundReport behavior = behavior_advantage_bound(mdp, pi_k, pi, mu);
    row(i, "behavior_bound", behavior.lhs, behavior.rhs);

    ExactEvaluation ek = evaluate(mdp, pi_k);
    TabularPolicy best = clipped_update(pi_k, ek, 0.2);
    double tau = uniform_real(rng, 0.0, 1.0);
    TabularPolicy pi_next = mix_policies(pi_k, best, tau);
    ValueImprovementCheck vic = ppo_value_improvement_check(mdp, pi_k, pi_next);
    if (vic.hypothesis_holds)
      row(i, "value_improvement", vic.mean_value_after,
          vic.mean_value_before);
    else
      row(i, "value_improvement_hypothesis", vic.linear_term, 0.0);
  }
  return violations > 0 ? 2 : 0;
}

int cmd_vtrace_demo(double phi, double rho_bar, const std::string& out_csv) {
  if (phi <= 0.0 || phi >= 1.0)
    throw std::invalid_argument("vtrace-demo: phi must lie in (0, 1)");
  if (rho_bar <= 0.0)
    throw std::invalid_argument("vtrace-demo: rho_bar must be positive");

  TabularMDP mdp = off_policy_gap_mdp();
  TabularPolicy mu = gap_behavior(phi);
  TabularPolicy pi = gap_target(phi);
  TruncatedFixedPoint fp = vtrace_fixed_point(mdp, pi, mu, rho_bar, rho_bar);
  ExactEvaluation true_eval = evaluate(mdp, pi);

  std::ofstream out(out_csv);
  if (!out) throw std::runtime_error("cannot write " + out_csv);
  out << "state,pi_action1,pi_rho_action1,v_true,v_fixed_point,rel_gap\n";
  std::cout << "state  pi(a1)   pi_rho(a1)  V_pi        V_fixed     rel_gap\n";
  for (int s = 0; s < mdp.num_states; ++s) {
    double vt = true_eval.V[static_cast<std::size_t>(s)];
    double vf = fp.V[static_cast<std::size_t>(s)];
    double rel = vt != 0.0 ? std::fabs((vt - vf) / vt) : 0.0;
    out << s << ',' << fmt(pi.prob(s, 1)) << ',' << fmt(fp.pi_rho.prob(s, 1))
        << ',' << fmt(vt) << ',' << fmt(vf) << ',' << fmt(rel) << '\n';
    std::printf("%-6d %-8.4f %-11.4f %-11.6f %-11.6f %.6f\n", s,
                pi.prob(s, 1), fp.pi_rho.prob(s, 1), vt, vf, rel);
  }
  return 0;
}

int cmd_plotdata(const std::vector<std::string>& csv_paths,
                 const std::string& out_path) {
  if (csv_paths.empty())
    throw std::invalid_argument("plot-data: no input files");

  std::string header;
  std::vector<std::vector<std::vector<double>>> tables;  // file -> row -> col
  for (const std::string& path : csv_paths) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("plot-data: cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
      throw std::invalid_argument("plot-data: empty file " + path);
    if (header.empty())
      header = line;
    else if (header != line)
      throw std::invalid_argument("plot-data: schema mismatch in " + path);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<double> cols;
      std::stringstream ss(line);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        try {
          cols.push_back(std::stod(tok));
        } catch (const std::exception&) {
          cols.push_back(0.0);
        }
      }
      rows.push_back(std::move(cols));
    }
    tables.push_back(std::move(rows));
  }

  std::size_t nrows = tables.front().size();
  std::size_t ncols = nrows ? tables.front().front().size() : 0;
  for (const auto& t : tables)
    if (t.size() != nrows || (nrows && t.front().size() != ncols))
      throw std::invalid_argument("plot-data: row count mismatch");

  std::vector<std::string> names;
  {
    std::stringstream ss(header);
    std::string tok;
    while (std::getline(ss, tok, ',')) names.push_back(tok);
  }
  if (names.size() != ncols && nrows)
    throw std::invalid_argument("plot-data: header width mismatch");

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << "# " << names.front();
  for (std::size_t c = 1; c < ncols; ++c)
    out << ' ' << names[c] << "_mean " << names[c] << "_std";
  out << "\n";
  for (std::size_t r = 0; r < nrows; ++r) {
    out << fmt(tables.front()[r][0]);
    for (std::size_t c = 1; c < ncols; ++c) {
      double mean = 0.0;
      for (const auto& t : tables) mean += t[r][c];
      mean /= static_cast<double>(tables.size());
      double var = 0.0;
      for (const auto& t : tables) var += (t[r][c] - mean) * (t[r][c] - mean);
      var /= static_cast<double>(tables.size());
      out << ' ' << fmt(mean) << ' ' << fmt(std::sqrt(var));
    }
    out << "\n";
  }
  return 0;
}

}  // namespace toppo
