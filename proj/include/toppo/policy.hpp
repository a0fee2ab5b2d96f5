#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "toppo/autodiff.hpp"
#include "toppo/tensor.hpp"

namespace toppo {

enum class ActionFamily { Categorical, Gaussian };

// Action distribution at one state. Categorical policies carry probabilities
// together with the log probabilities they were derived from; Gaussian
// policies carry a mean vector and a shared standard deviation.
struct ActionDistribution {
  ActionFamily family = ActionFamily::Categorical;
  std::vector<double> probs;
  std::vector<double> log_probs;
  std::vector<double> mean;
  std::vector<double> log_std;

  int arity() const;
  void validate() const;  // probabilities on the simplex, finite parameters
};

// Two-hidden-layer tanh network with either a categorical head over discrete
// actions or a Gaussian head with a state-independent log standard deviation.
struct PolicyParams {
  std::int64_t snapshot_id = 0;
  ActionFamily family = ActionFamily::Categorical;
  int obs_dim = 0;
  int act_dim = 0;  // number of actions or action-space dimension
  int hidden1 = 64;
  int hidden2 = 64;
  Tensor w1, b1, w2, b2, w_head, b_head;
  Tensor log_std;  // Gaussian family only

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
};

// Scalar state-value network with the same trunk architecture.
struct ValueParams {
  int obs_dim = 0;
  int hidden1 = 64;
  int hidden2 = 64;
  Tensor w1, b1, w2, b2, w_head, b_head;

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
};

PolicyParams make_policy(ActionFamily family, int obs_dim, int act_dim,
                         int hidden1, int hidden2, std::mt19937_64& rng);
ValueParams make_value(int obs_dim, int hidden1, int hidden2,
                       std::mt19937_64& rng);

// Gradient-free forward passes. These run through the same numeric kernels
// as the tape operations, so a log probability stored at collection time is
// bitwise equal to the one recomputed on the tape during an update.
Tensor policy_head(const PolicyParams& p, const Tensor& obs);  // logits or means
std::vector<ActionDistribution> policy_distributions(const PolicyParams& p,
                                                     const Tensor& obs);
ActionDistribution policy_distribution(const PolicyParams& p,
                                       const std::vector<double>& obs);
Tensor value_predict(const ValueParams& v, const Tensor& obs);  // [B]
double value_predict(const ValueParams& v, const std::vector<double>& obs);

// Tape forward passes used when gradients are required.
ad::Var policy_head_graph(ad::Tape& tape, const PolicyParams& p, ad::Var obs,
                          std::vector<ad::Var>& param_vars);
ad::Var value_graph(ad::Tape& tape, const ValueParams& v, ad::Var obs,
                    std::vector<ad::Var>& param_vars);

double log_prob(const ActionDistribution& d, int action);
double log_prob(const ActionDistribution& d, const std::vector<double>& action);

int sample_action(const ActionDistribution& d, std::mt19937_64& rng);
std::vector<double> sample_action_vec(const ActionDistribution& d,
                                      std::mt19937_64& rng);
// Deterministic action for evaluation: argmax or the Gaussian mean.
int mode_action(const ActionDistribution& d);
std::vector<double> mode_action_vec(const ActionDistribution& d);

double kl_divergence(const ActionDistribution& p, const ActionDistribution& q);
// Total variation distance; defined for the categorical family only and
// throws for Gaussians, whose policy-overlap check uses KL instead.
double total_variation(const ActionDistribution& p, const ActionDistribution& q);
double entropy(const ActionDistribution& d);

// Single-file snapshot: magic, JSON header describing the architecture,
// then every parameter tensor flattened to little-endian doubles.
void save_policy(const PolicyParams& p, const std::string& path);
PolicyParams load_policy(const std::string& path);

}  // namespace toppo
