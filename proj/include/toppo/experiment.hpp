#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toppo/config.hpp"
#include "toppo/trainer.hpp"

namespace toppo {

// Mean of the final up-to-ten evaluation returns of one run.
double final_return(const TrainResult& result);

// Runs the experiment: one training run per seed (fanned out across
// TOPPO_THREADS workers), metrics/eval/selection CSVs and a policy snapshot
// per seed, plus summary.json. Returns a process exit code.
int cmd_train(const ExperimentConfig& config);

// Exact-oracle fuzzing of the performance-difference identity, both
// lower bounds, and the value-improvement implication for clipped-surrogate
// updates, on `count` random small MDPs. Writes a per-instance report CSV.
// Returns 2 when any check is violated beyond tolerance.
int cmd_fuzz_bounds(int count, int num_states, int num_actions, double gamma,
                    std::uint64_t seed, const std::string& out_csv);

// Prints and writes the truncated-importance-weight fixed point and its
// value gap on the two-state fixture.
int cmd_vtrace_demo(double phi, double rho_bar, const std::string& out_csv);

// Aggregates same-schema CSV curves into whitespace-separated
// mean/std columns keyed by the leading columns.
int cmd_plotdata(const std::vector<std::string>& csv_paths,
                 const std::string& out_path);

}  // namespace toppo
