#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toppo/trainer.hpp"

namespace toppo {

// A batch experiment: one training configuration fanned out over seeds.
struct ExperimentConfig {
  TrainConfig train;
  std::string algorithm = "toppo";  // toppo | ppo | geppo
  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir = "runs";

  void validate() const;
};

// Line-oriented key=value text with [section] headers. parse(serialize(c))
// reproduces c exactly. Unknown sections or keys are errors naming the
// offender.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& config);

}  // namespace toppo
