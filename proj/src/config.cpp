#include "fprl/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fprl::config {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

const std::map<std::string, std::string>& RunConfig::defaults() {
  // Single source of truth for the key set. Values are kept as strings and
  // parsed on access so the dump/reload cycle is trivially lossless.
  static const std::map<std::string, std::string> table = {
      // run identity
      {"env", "resources"},
      {"variant", "fpbrl"},
      {"seed", "0"},
      {"out", "runs"},
      {"total_steps", "150000"},

      // policy optimization
      {"agent.gamma", "0.99"},
      {"agent.lambda", "0.95"},
      {"agent.clip_epsilon", "0.2"},
      {"agent.lr_policy", "3e-4"},
      {"agent.lr_critic", "3e-4"},
      {"agent.ppo_epochs", "4"},
      {"agent.minibatch", "64"},
      {"agent.rollout_steps", "2048"},
      {"agent.entropy_coef", "0.01"},
      {"agent.grad_clip", "0.5"},
      // which return estimate drives the weight permutation: the ground-truth
      // episodic returns or the learned-reward ones
      {"agent.j_source", "ground_truth"},
      {"agent.j_decay", "0.9"},
      // custom objective weights for the ground-truth PPO baseline's scalar
      // reward; empty means unweighted sum
      {"agent.ppo_weights", ""},

      // preference learning
      {"pref.session_size", "30"},
      {"pref.budget", "700"},
      {"pref.segment_len", "25"},
      {"pref.discounted", "true"},
      {"pref.noisy_labels", "false"},
      {"pref.lr", "1e-3"},
      {"pref.epochs", "3"},
      {"pref.batch_size", "32"},
      {"pref.episodes_per_session", "4"},

      // evaluation
      {"eval.trajectories", "100"},
      {"eval.greedy", "false"},

      // species conservation environment
      {"env.species.r_a", "0.35"},
      {"env.species.r_o", "0.06"},
      {"env.species.c_p", "0.35"},
      {"env.species.h", "0.3"},
      {"env.species.starve", "0.03"},
      {"env.species.poach", "0.05"},
      {"env.species.poach_anti", "0.01"},
      {"env.species.poach_half", "0.03"},
      {"env.species.intro_delta", "0.09"},
      {"env.species.control_delta", "0.05"},
      {"env.species.half_control_delta", "0.025"},
      {"env.species.spill_prob", "0.02"},
      {"env.species.spill_factor", "0.5"},
      {"env.species.extinct_threshold", "0.01"},
      {"env.species.init_low", "0.3"},
      {"env.species.init_high", "0.7"},
      {"env.species.episode_len", "100"},

      // resource gathering environment
      {"env.resources.gold_value", "1.0"},
      {"env.resources.gem_value", "1.0"},
      {"env.resources.stone_value", "0.4"},
      {"env.resources.episode_len", "200"},

      // traffic intersection environment
      {"env.traffic.p0", "0.5"},
      {"env.traffic.p1", "0.3"},
      {"env.traffic.p2", "0.3"},
      {"env.traffic.p3", "0.1"},
      {"env.traffic.release", "2"},
      {"env.traffic.switch_delay", "2"},
      {"env.traffic.wait_scale", "50"},
      {"env.traffic.queue_norm", "50"},
      {"env.traffic.wait_norm", "5000"},
      {"env.traffic.episode_len", "300"},

      // two-armed bandit sanity environment
      {"env.bandit.arm0", "1.0"},
      {"env.bandit.arm1", "0.0"},
      {"env.bandit.episode_len", "10"},
  };
  return table;
}

RunConfig::RunConfig() : values_(defaults()) {}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: " + path.string() + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

bool RunConfig::is_known(const std::string& key) const {
  return defaults().count(key) != 0;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!is_known(key)) throw ConfigError("config: unknown key '" + key + "'");
  values_[key] = value;
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("config: override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& RunConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& raw = get_string(key);
  char* end = nullptr;
  const double v = std::strtod(raw.c_str(), &end);
  if (end == raw.c_str() || *end != '\0')
    throw ConfigError("config: key '" + key + "' has non-numeric value '" + raw + "'");
  return v;
}

int RunConfig::get_int(const std::string& key) const {
  const double v = get_double(key);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v)
    throw ConfigError("config: key '" + key + "' must be an integer");
  return i;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& raw = get_string(key);
  char* end = nullptr;
  const unsigned long long v = std::strtoull(raw.c_str(), &end, 10);
  if (end == raw.c_str() || *end != '\0')
    throw ConfigError("config: key '" + key + "' must be a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& raw = get_string(key);
  if (raw == "true" || raw == "1") return true;
  if (raw == "false" || raw == "0") return false;
  throw ConfigError("config: key '" + key + "' must be true/false, got '" + raw + "'");
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
  const std::string& raw = get_string(key);
  std::vector<double> out;
  if (trim(raw).empty()) return out;
  std::stringstream ss(raw);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
      throw ConfigError("config: key '" + key + "' has a non-numeric list entry '" +
                        tok + "'");
    out.push_back(v);
  }
  return out;
}

void RunConfig::write(std::ostream& out) const {
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
}

}  // namespace fprl::config
