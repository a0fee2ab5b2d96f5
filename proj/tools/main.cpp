#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "toppo/config.hpp"
#include "toppo/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"toppo: multi-batch clipped policy optimization lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string algo;
  std::int64_t seed_override = -1;
  bool no_selection = false;
  bool adaptive_eps = false;

  CLI::App* train = app.add_subcommand("train", "run a training experiment");
  train->add_option("--config", config_path, "experiment config file")
      ->required();
  train->add_option("--seed", seed_override, "override: train this seed only");
  train->add_option("--out", out_dir, "override output directory");
  train->add_option("--algo", algo, "override algorithm")
      ->check(CLI::IsMember({"toppo", "ppo", "geppo"}));
  train->add_flag("--no-selection", no_selection,
                  "keep stale batches; no filtering");
  train->add_flag("--adaptive-eps", adaptive_eps,
                  "shrink the clip width with the batch count");

  int fuzz_count = 1000;
  int fuzz_states = 4;
  int fuzz_actions = 3;
  double fuzz_gamma = 0.9;
  std::uint64_t fuzz_seed = 0;
  std::string fuzz_out = "fuzz_report.csv";
  CLI::App* fuzz =
      app.add_subcommand("fuzz-bounds", "exact-oracle bound fuzzing");
  fuzz->add_option("--count", fuzz_count, "instances to draw");
  fuzz->add_option("--states", fuzz_states, "states per instance");
  fuzz->add_option("--actions", fuzz_actions, "actions per instance");
  fuzz->add_option("--gamma", fuzz_gamma, "discount factor");
  fuzz->add_option("--seed", fuzz_seed, "rng seed");
  fuzz->add_option("--out", fuzz_out, "report csv path");

  double demo_phi = 0.01;
  double demo_rho_bar = 1.0;
  std::string demo_out = "vtrace_demo.csv";
  CLI::App* demo = app.add_subcommand(
      "vtrace-demo", "fixed point of truncated importance weighting");
  demo->add_option("--phi", demo_phi, "behavior/target mirror probability");
  demo->add_option("--rho-bar", demo_rho_bar, "importance weight cap");
  demo->add_option("--out", demo_out, "csv path");

  std::vector<std::string> plot_inputs;
  std::string plot_out = "curves.dat";
  CLI::App* plot =
      app.add_subcommand("plot-data", "aggregate metric curves over seeds");
  plot->add_option("inputs", plot_inputs, "metric csv files")->required();
  plot->add_option("--out", plot_out, "aggregated output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      toppo::ExperimentConfig cfg = toppo::load_config(config_path);
      if (seed_override >= 0)
        cfg.seeds = {static_cast<std::uint64_t>(seed_override)};
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (!algo.empty()) cfg.algorithm = algo;
      if (no_selection) cfg.train.disable_selection = true;
      if (adaptive_eps) cfg.train.adaptive_epsilon = true;
      return toppo::cmd_train(cfg);
    }
    if (fuzz->parsed())
      return toppo::cmd_fuzz_bounds(fuzz_count, fuzz_states, fuzz_actions,
                                    fuzz_gamma, fuzz_seed, fuzz_out);
    if (demo->parsed())
      return toppo::cmd_vtrace_demo(demo_phi, demo_rho_bar, demo_out);
    if (plot->parsed()) return toppo::cmd_plotdata(plot_inputs, plot_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
