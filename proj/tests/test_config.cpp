#include <stdexcept>
#include <string>

#include "doctest.h"
#include "toppo/config.hpp"

using namespace toppo;

TEST_CASE("serialization round-trips every field exactly") {
  ExperimentConfig c;
  c.algorithm = "geppo";
  c.seeds = {3, 14, 159};
  c.out_dir = "elsewhere";
  c.train.env_id = "pendulum";
  c.train.total_timesteps = 44032;
  c.train.batch_size = 512;
  c.train.minibatches = 16;
  c.train.epochs = 7;
  c.train.gamma = 0.97;
  c.train.lambda = 0.912345678901234;
  c.train.epsilon_base = 0.25;
  c.train.epsilon_fixed = 0.07;
  c.train.adaptive_epsilon = true;
  c.train.buffer_capacity = 4;
  c.train.alpha = 0.05;
  c.train.learning_rate = 1.5e-4;
  c.train.entropy_coef = 0.002;
  c.train.early_stop_kl = 0.02;
  c.train.disable_selection = true;
  c.train.hidden = 32;
  c.train.eval_every = 4;
  c.train.eval_episodes = 6;

  ExperimentConfig back = parse_config(serialize_config(c));
  CHECK(back.algorithm == c.algorithm);
  CHECK(back.seeds == c.seeds);
  CHECK(back.out_dir == c.out_dir);
  CHECK(back.train.env_id == c.train.env_id);
  CHECK(back.train.total_timesteps == c.train.total_timesteps);
  CHECK(back.train.batch_size == c.train.batch_size);
  CHECK(back.train.minibatches == c.train.minibatches);
  CHECK(back.train.epochs == c.train.epochs);
  CHECK(back.train.gamma == c.train.gamma);
  CHECK(back.train.lambda == c.train.lambda);
  CHECK(back.train.epsilon_base == c.train.epsilon_base);
  CHECK(back.train.epsilon_fixed == c.train.epsilon_fixed);
  CHECK(back.train.adaptive_epsilon == c.train.adaptive_epsilon);
  CHECK(back.train.buffer_capacity == c.train.buffer_capacity);
  CHECK(back.train.alpha == c.train.alpha);
  CHECK(back.train.learning_rate == c.train.learning_rate);
  CHECK(back.train.entropy_coef == c.train.entropy_coef);
  CHECK(back.train.early_stop_kl == c.train.early_stop_kl);
  CHECK(back.train.disable_selection == c.train.disable_selection);
  CHECK(back.train.hidden == c.train.hidden);
  CHECK(back.train.eval_every == c.train.eval_every);
  CHECK(back.train.eval_episodes == c.train.eval_episodes);
}

TEST_CASE("unknown keys and sections are rejected by name") {
  CHECK_THROWS_WITH_AS(
      parse_config("[train]\nwarmup=5\n"), doctest::Contains("warmup"),
      std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      parse_config("[rollout]\nenv=chain\n"), doctest::Contains("rollout"),
      std::invalid_argument);
  CHECK_THROWS_AS(parse_config("env=chain\n"),  // key before any section
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_config("[train]\nepochs\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("[train]\ngamma=high\n"),
                  std::invalid_argument);
}

TEST_CASE("comments, blanks, and the entropy sentinel parse cleanly") {
  std::string text =
      "# experiment file\n"
      "[experiment]\n"
      "algorithm = ppo\n"
      "seeds = 1, 2, 3\n"
      "\n"
      "[train]\n"
      "env = chain\n"
      "entropy_coef = auto\n"
      "epochs = 4   # tight loop\n";
  ExperimentConfig c = parse_config(text);
  CHECK(c.algorithm == "ppo");
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(c.train.env_id == "chain");
  CHECK(c.train.entropy_coef == -1.0);  // resolved later by action family
  CHECK(c.train.epochs == 4);
}

TEST_CASE("experiment validation covers algorithm and seed list") {
  ExperimentConfig c;
  c.algorithm = "sac";
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("sac"),
                       std::invalid_argument);
  ExperimentConfig empty;
  empty.seeds.clear();
  CHECK_THROWS_AS(empty.validate(), std::invalid_argument);
  ExperimentConfig dup;
  dup.seeds = {4, 4};
  CHECK_THROWS_AS(dup.validate(), std::invalid_argument);
  ExperimentConfig fine;
  fine.seeds = {0, 1};
  fine.validate();
}

TEST_CASE("loading a missing file names the path") {
  CHECK_THROWS_WITH_AS(load_config("/nonexistent/cfg.ini"),
                       doctest::Contains("/nonexistent/cfg.ini"),
                       std::invalid_argument);
}
