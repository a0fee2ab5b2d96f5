#include "toppo/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace toppo {

static_assert(std::endian::native == std::endian::little,
              "snapshot format assumes a little-endian host");

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

Tensor init_weight(int out_dim, int in_dim, std::mt19937_64& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  Tensor w = Tensor::zeros({out_dim, in_dim});
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : w.data) v = u(rng);
  return w;
}

Tensor row_matrix(const std::vector<double>& v) {
  return Tensor::matrix(1, static_cast<int>(v.size()), v);
}

}  // namespace

int ActionDistribution::arity() const {
  return family == ActionFamily::Categorical ? static_cast<int>(probs.size())
                                             : static_cast<int>(mean.size());
}

void ActionDistribution::validate() const {
  if (family == ActionFamily::Categorical) {
    if (probs.empty() || probs.size() != log_probs.size())
      throw std::invalid_argument("categorical distribution malformed");
    double total = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0) || !std::isfinite(p))
        throw std::invalid_argument("categorical probability outside [0, 1]");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("categorical probabilities do not sum to 1");
  } else {
    if (mean.empty() || log_std.size() != mean.size())
      throw std::invalid_argument("gaussian distribution malformed");
    for (double m : mean)
      if (!std::isfinite(m)) throw std::invalid_argument("non-finite mean");
    for (double s : log_std)
      if (!std::isfinite(s)) throw std::invalid_argument("non-finite log std");
  }
}

std::vector<Tensor*> PolicyParams::tensors() {
  std::vector<Tensor*> out = {&w1, &b1, &w2, &b2, &w_head, &b_head};
  if (family == ActionFamily::Gaussian) out.push_back(&log_std);
  return out;
}

std::vector<const Tensor*> PolicyParams::tensors() const {
  std::vector<const Tensor*> out = {&w1, &b1, &w2, &b2, &w_head, &b_head};
  if (family == ActionFamily::Gaussian) out.push_back(&log_std);
  return out;
}

std::vector<Tensor*> ValueParams::tensors() {
  return {&w1, &b1, &w2, &b2, &w_head, &b_head};
}

std::vector<const Tensor*> ValueParams::tensors() const {
  return {&w1, &b1, &w2, &b2, &w_head, &b_head};
}

PolicyParams make_policy(ActionFamily family, int obs_dim, int act_dim,
                         int hidden1, int hidden2, std::mt19937_64& rng) {
  if (obs_dim <= 0 || act_dim <= 0 || hidden1 <= 0 || hidden2 <= 0)
    throw std::invalid_argument("make_policy: dimensions must be positive");
  PolicyParams p;
  p.family = family;
  p.obs_dim = obs_dim;
  p.act_dim = act_dim;
  p.hidden1 = hidden1;
  p.hidden2 = hidden2;
  p.w1 = init_weight(hidden1, obs_dim, rng);
  p.b1 = Tensor::zeros({hidden1});
  p.w2 = init_weight(hidden2, hidden1, rng);
  p.b2 = Tensor::zeros({hidden2});
  p.w_head = init_weight(act_dim, hidden2, rng);
  p.b_head = Tensor::zeros({act_dim});
  if (family == ActionFamily::Gaussian) p.log_std = Tensor::zeros({act_dim});
  return p;
}

ValueParams make_value(int obs_dim, int hidden1, int hidden2,
                       std::mt19937_64& rng) {
  if (obs_dim <= 0 || hidden1 <= 0 || hidden2 <= 0)
    throw std::invalid_argument("make_value: dimensions must be positive");
  ValueParams v;
  v.obs_dim = obs_dim;
  v.hidden1 = hidden1;
  v.hidden2 = hidden2;
  v.w1 = init_weight(hidden1, obs_dim, rng);
  v.b1 = Tensor::zeros({hidden1});
  v.w2 = init_weight(hidden2, hidden1, rng);
  v.b2 = Tensor::zeros({hidden2});
  v.w_head = init_weight(1, hidden2, rng);
  v.b_head = Tensor::zeros({1});
  return v;
}

Tensor policy_head(const PolicyParams& p, const Tensor& obs) {
  if (obs.rank() != 2 || obs.cols() != p.obs_dim)
    throw std::invalid_argument("policy_head: observation shape mismatch");
  Tensor h1, h2, head;
  kernels::affine(obs, p.w1, p.b1, h1);
  kernels::tanh_inplace(h1);
  kernels::affine(h1, p.w2, p.b2, h2);
  kernels::tanh_inplace(h2);
  kernels::affine(h2, p.w_head, p.b_head, head);
  check_finite(head, "policy_head");
  return head;
}

std::vector<ActionDistribution> policy_distributions(const PolicyParams& p,
                                                     const Tensor& obs) {
  Tensor head = policy_head(p, obs);
  int batch = head.rows();
  std::vector<ActionDistribution> out(static_cast<std::size_t>(batch));
  if (p.family == ActionFamily::Categorical) {
    Tensor logp;
    kernels::log_softmax(head, logp);
    for (int r = 0; r < batch; ++r) {
      ActionDistribution& d = out[static_cast<std::size_t>(r)];
      d.family = ActionFamily::Categorical;
      d.log_probs.resize(static_cast<std::size_t>(p.act_dim));
      d.probs.resize(static_cast<std::size_t>(p.act_dim));
      for (int a = 0; a < p.act_dim; ++a) {
        d.log_probs[static_cast<std::size_t>(a)] = logp.at(r, a);
        d.probs[static_cast<std::size_t>(a)] = std::exp(logp.at(r, a));
      }
    }
  } else {
    for (int r = 0; r < batch; ++r) {
      ActionDistribution& d = out[static_cast<std::size_t>(r)];
      d.family = ActionFamily::Gaussian;
      d.mean.resize(static_cast<std::size_t>(p.act_dim));
      d.log_std.resize(static_cast<std::size_t>(p.act_dim));
      for (int a = 0; a < p.act_dim; ++a) {
        d.mean[static_cast<std::size_t>(a)] = head.at(r, a);
        d.log_std[static_cast<std::size_t>(a)] = p.log_std.data[a];
      }
    }
  }
  return out;
}

ActionDistribution policy_distribution(const PolicyParams& p,
                                       const std::vector<double>& obs) {
  return policy_distributions(p, row_matrix(obs))[0];
}

Tensor value_predict(const ValueParams& v, const Tensor& obs) {
  if (obs.rank() != 2 || obs.cols() != v.obs_dim)
    throw std::invalid_argument("value_predict: observation shape mismatch");
  Tensor h1, h2, head;
  kernels::affine(obs, v.w1, v.b1, h1);
  kernels::tanh_inplace(h1);
  kernels::affine(h1, v.w2, v.b2, h2);
  kernels::tanh_inplace(h2);
  kernels::affine(h2, v.w_head, v.b_head, head);
  check_finite(head, "value_predict");
  Tensor out = Tensor::zeros({head.rows()});
  for (int r = 0; r < head.rows(); ++r) out.data[r] = head.at(r, 0);
  return out;
}

double value_predict(const ValueParams& v, const std::vector<double>& obs) {
  Tensor row = Tensor::matrix(1, static_cast<int>(obs.size()),
                              std::vector<double>(obs));
  return value_predict(v, row).data[0];
}

ad::Var policy_head_graph(ad::Tape& tape, const PolicyParams& p, ad::Var obs,
                          std::vector<ad::Var>& param_vars) {
  ad::Var w1 = tape.leaf(p.w1), b1 = tape.leaf(p.b1);
  ad::Var w2 = tape.leaf(p.w2), b2 = tape.leaf(p.b2);
  ad::Var wh = tape.leaf(p.w_head), bh = tape.leaf(p.b_head);
  param_vars = {w1, b1, w2, b2, wh, bh};
  if (p.family == ActionFamily::Gaussian)
    param_vars.push_back(tape.leaf(p.log_std));
  ad::Var h1 = tape.tanh(tape.affine(obs, w1, b1));
  ad::Var h2 = tape.tanh(tape.affine(h1, w2, b2));
  return tape.affine(h2, wh, bh);
}

ad::Var value_graph(ad::Tape& tape, const ValueParams& v, ad::Var obs,
                    std::vector<ad::Var>& param_vars) {
  ad::Var w1 = tape.leaf(v.w1), b1 = tape.leaf(v.b1);
  ad::Var w2 = tape.leaf(v.w2), b2 = tape.leaf(v.b2);
  ad::Var wh = tape.leaf(v.w_head), bh = tape.leaf(v.b_head);
  param_vars = {w1, b1, w2, b2, wh, bh};
  ad::Var h1 = tape.tanh(tape.affine(obs, w1, b1));
  ad::Var h2 = tape.tanh(tape.affine(h1, w2, b2));
  return tape.affine(h2, wh, bh);
}

double log_prob(const ActionDistribution& d, int action) {
  if (d.family != ActionFamily::Categorical)
    throw std::invalid_argument("log_prob: discrete action on Gaussian policy");
  if (action < 0 || action >= d.arity())
    throw std::invalid_argument("log_prob: action out of range");
  return d.log_probs[static_cast<std::size_t>(action)];
}

double log_prob(const ActionDistribution& d, const std::vector<double>& action) {
  if (d.family != ActionFamily::Gaussian)
    throw std::invalid_argument("log_prob: vector action on categorical policy");
  if (action.size() != d.mean.size())
    throw std::invalid_argument("log_prob: action dimension mismatch");
  Tensor mean = row_matrix(d.mean);
  Tensor ls = Tensor::vec(d.log_std);
  Tensor act = row_matrix(action);
  Tensor out;
  kernels::gaussian_log_prob(mean, ls, act, out);
  return out.data[0];
}

int sample_action(const ActionDistribution& d, std::mt19937_64& rng) {
  if (d.family != ActionFamily::Categorical)
    throw std::invalid_argument("sample_action: categorical policy expected");
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  int n = d.arity();
  for (int a = 0; a < n; ++a) {
    acc += d.probs[static_cast<std::size_t>(a)];
    if (u < acc) return a;
  }
  return n - 1;
}

std::vector<double> sample_action_vec(const ActionDistribution& d,
                                      std::mt19937_64& rng) {
  if (d.family != ActionFamily::Gaussian)
    throw std::invalid_argument("sample_action_vec: Gaussian policy expected");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(d.mean.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = d.mean[i] + std::exp(d.log_std[i]) * normal(rng);
  return out;
}

int mode_action(const ActionDistribution& d) {
  if (d.family != ActionFamily::Categorical)
    throw std::invalid_argument("mode_action: categorical policy expected");
  return static_cast<int>(std::max_element(d.probs.begin(), d.probs.end()) -
                          d.probs.begin());
}

std::vector<double> mode_action_vec(const ActionDistribution& d) {
  if (d.family != ActionFamily::Gaussian)
    throw std::invalid_argument("mode_action_vec: Gaussian policy expected");
  return d.mean;
}

double kl_divergence(const ActionDistribution& p, const ActionDistribution& q) {
  if (p.family != q.family)
    throw std::invalid_argument("kl_divergence: family mismatch");
  if (p.arity() != q.arity())
    throw std::invalid_argument("kl_divergence: arity mismatch");
  if (p.family == ActionFamily::Categorical) {
    double kl = 0.0;
    for (std::size_t a = 0; a < p.probs.size(); ++a) {
      double pa = p.probs[a];
      if (pa <= 0.0) continue;
      kl += pa * (p.log_probs[a] - q.log_probs[a]);
    }
    return kl;
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.mean.size(); ++i) {
    double ls_p = p.log_std[i], ls_q = q.log_std[i];
    double var_p = std::exp(2.0 * ls_p), var_q = std::exp(2.0 * ls_q);
    double dm = p.mean[i] - q.mean[i];
    kl += ls_q - ls_p + (var_p + dm * dm) / (2.0 * var_q) - 0.5;
  }
  return kl;
}

double total_variation(const ActionDistribution& p, const ActionDistribution& q) {
  if (p.family != ActionFamily::Categorical ||
      q.family != ActionFamily::Categorical)
    throw std::invalid_argument(
        "total_variation: closed form available for categorical policies only");
  if (p.arity() != q.arity())
    throw std::invalid_argument("total_variation: arity mismatch");
  double s = 0.0;
  for (std::size_t a = 0; a < p.probs.size(); ++a)
    s += std::abs(p.probs[a] - q.probs[a]);
  return 0.5 * s;
}

double entropy(const ActionDistribution& d) {
  if (d.family == ActionFamily::Categorical) {
    double h = 0.0;
    for (std::size_t a = 0; a < d.probs.size(); ++a)
      if (d.probs[a] > 0.0) h -= d.probs[a] * d.log_probs[a];
    return h;
  }
  double h = 0.0;
  for (double ls : d.log_std) h += ls + 0.5 * (kLogTwoPi + 1.0);
  return h;
}

namespace {

constexpr char kMagic[4] = {'T', 'P', 'S', 'N'};

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

void save_policy(const PolicyParams& p, const std::string& path) {
  nlohmann::json header;
  header["format"] = 1;
  header["family"] =
      p.family == ActionFamily::Categorical ? "categorical" : "gaussian";
  header["snapshot_id"] = p.snapshot_id;
  header["obs_dim"] = p.obs_dim;
  header["act_dim"] = p.act_dim;
  header["hidden1"] = p.hidden1;
  header["hidden2"] = p.hidden2;
  std::string hs = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_policy: cannot open " + path);
  os.write(kMagic, 4);
  write_u32(os, static_cast<std::uint32_t>(hs.size()));
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const Tensor* t : p.tensors())
    os.write(reinterpret_cast<const char*>(t->data.data()),
             static_cast<std::streamsize>(t->data.size() * sizeof(double)));
  if (!os) throw std::runtime_error("save_policy: write failed for " + path);
}

PolicyParams load_policy(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_policy: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("load_policy: bad magic in " + path);
  std::uint32_t hlen = read_u32(is);
  std::string hs(hlen, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw std::runtime_error("load_policy: truncated header in " + path);
  nlohmann::json header = nlohmann::json::parse(hs);

  PolicyParams p;
  std::string fam = header.at("family").get<std::string>();
  p.family =
      fam == "categorical" ? ActionFamily::Categorical : ActionFamily::Gaussian;
  p.snapshot_id = header.at("snapshot_id").get<std::int64_t>();
  p.obs_dim = header.at("obs_dim").get<int>();
  p.act_dim = header.at("act_dim").get<int>();
  p.hidden1 = header.at("hidden1").get<int>();
  p.hidden2 = header.at("hidden2").get<int>();
  p.w1 = Tensor::zeros({p.hidden1, p.obs_dim});
  p.b1 = Tensor::zeros({p.hidden1});
  p.w2 = Tensor::zeros({p.hidden2, p.hidden1});
  p.b2 = Tensor::zeros({p.hidden2});
  p.w_head = Tensor::zeros({p.act_dim, p.hidden2});
  p.b_head = Tensor::zeros({p.act_dim});
  if (p.family == ActionFamily::Gaussian) p.log_std = Tensor::zeros({p.act_dim});
  for (Tensor* t : p.tensors()) {
    is.read(reinterpret_cast<char*>(t->data.data()),
            static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    if (!is) throw std::runtime_error("load_policy: truncated data in " + path);
  }
  char extra;
  if (is.read(&extra, 1))
    throw std::runtime_error("load_policy: trailing bytes in " + path);
  return p;
}

}  // namespace toppo
