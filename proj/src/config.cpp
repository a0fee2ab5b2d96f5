#include "toppo/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace toppo {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for '" + key + "': " + v);
  }
}

long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for '" + key + "': " + v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("config: bad boolean for '" + key + "': " + v);
}

std::vector<std::uint64_t> parse_seeds(const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    out.push_back(static_cast<std::uint64_t>(parse_long("seeds", tok)));
  }
  if (out.empty()) throw std::invalid_argument("config: empty seeds list");
  return out;
}

void apply_train_key(TrainConfig& t, const std::string& key,
                     const std::string& v) {
  if (key == "env") t.env_id = v;
  else if (key == "total_timesteps") t.total_timesteps = parse_long(key, v);
  else if (key == "batch_size") t.batch_size = static_cast<int>(parse_long(key, v));
  else if (key == "minibatches") t.minibatches = static_cast<int>(parse_long(key, v));
  else if (key == "epochs") t.epochs = static_cast<int>(parse_long(key, v));
  else if (key == "gamma") t.gamma = parse_double(key, v);
  else if (key == "lambda") t.lambda = parse_double(key, v);
  else if (key == "epsilon_base") t.epsilon_base = parse_double(key, v);
  else if (key == "epsilon_fixed") t.epsilon_fixed = parse_double(key, v);
  else if (key == "adaptive_epsilon") t.adaptive_epsilon = parse_bool(key, v);
  else if (key == "buffer_capacity") t.buffer_capacity = static_cast<int>(parse_long(key, v));
  else if (key == "alpha") t.alpha = parse_double(key, v);
  else if (key == "learning_rate") t.learning_rate = parse_double(key, v);
  else if (key == "entropy_coef") t.entropy_coef = v == "auto" ? -1.0 : parse_double(key, v);
  else if (key == "early_stop_kl") t.early_stop_kl = parse_double(key, v);
  else if (key == "disable_selection") t.disable_selection = parse_bool(key, v);
  else if (key == "hidden") t.hidden = static_cast<int>(parse_long(key, v));
  else if (key == "eval_every") t.eval_every = static_cast<int>(parse_long(key, v));
  else if (key == "eval_episodes") t.eval_episodes = static_cast<int>(parse_long(key, v));
  else
    throw std::invalid_argument("config: unknown key '" + key +
                                "' in section [train]");
}

void apply_experiment_key(ExperimentConfig& c, const std::string& key,
                          const std::string& v) {
  if (key == "algorithm") c.algorithm = v;
  else if (key == "seeds") c.seeds = parse_seeds(v);
  else if (key == "out_dir") c.out_dir = v;
  else
    throw std::invalid_argument("config: unknown key '" + key +
                                "' in section [experiment]");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (algorithm != "toppo" && algorithm != "ppo" && algorithm != "geppo")
    throw std::invalid_argument("config: unknown algorithm '" + algorithm +
                                "'");
  if (seeds.empty()) throw std::invalid_argument("config: empty seeds list");
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t j = i + 1; j < seeds.size(); ++j)
      if (seeds[i] == seeds[j])
        throw std::invalid_argument("config: duplicate seed " +
                                    std::to_string(seeds[i]));
  if (out_dir.empty()) throw std::invalid_argument("config: empty out_dir");
  train.validate();
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::stringstream ss(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    lineno += 1;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config: malformed section header at line " +
                                    std::to_string(lineno));
      section = line.substr(1, line.size() - 2);
      if (section != "train" && section != "experiment")
        throw std::invalid_argument("config: unknown section [" + section +
                                    "]");
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key=value at line " +
                                  std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (section == "train")
      apply_train_key(c.train, key, value);
    else if (section == "experiment")
      apply_experiment_key(c, key, value);
    else
      throw std::invalid_argument("config: key '" + key +
                                  "' outside any section");
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::stringstream out;
  out << "[experiment]\n";
  out << "algorithm=" << c.algorithm << "\n";
  out << "seeds=";
  for (std::size_t i = 0; i < c.seeds.size(); ++i)
    out << (i ? "," : "") << c.seeds[i];
  out << "\n";
  out << "out_dir=" << c.out_dir << "\n";
  const TrainConfig& t = c.train;
  out << "[train]\n";
  out << "env=" << t.env_id << "\n";
  out << "total_timesteps=" << t.total_timesteps << "\n";
  out << "batch_size=" << t.batch_size << "\n";
  out << "minibatches=" << t.minibatches << "\n";
  out << "epochs=" << t.epochs << "\n";
  out << "gamma=" << fmt_double(t.gamma) << "\n";
  out << "lambda=" << fmt_double(t.lambda) << "\n";
  out << "epsilon_base=" << fmt_double(t.epsilon_base) << "\n";
  out << "epsilon_fixed=" << fmt_double(t.epsilon_fixed) << "\n";
  out << "adaptive_epsilon=" << (t.adaptive_epsilon ? "true" : "false") << "\n";
  out << "buffer_capacity=" << t.buffer_capacity << "\n";
  out << "alpha=" << fmt_double(t.alpha) << "\n";
  out << "learning_rate=" << fmt_double(t.learning_rate) << "\n";
  out << "entropy_coef="
      << (t.entropy_coef < 0.0 ? std::string("auto")
                               : fmt_double(t.entropy_coef))
      << "\n";
  out << "early_stop_kl=" << fmt_double(t.early_stop_kl) << "\n";
  out << "disable_selection=" << (t.disable_selection ? "true" : "false")
      << "\n";
  out << "hidden=" << t.hidden << "\n";
  out << "eval_every=" << t.eval_every << "\n";
  out << "eval_episodes=" << t.eval_episodes << "\n";
  return out.str();
}

}  // namespace toppo
