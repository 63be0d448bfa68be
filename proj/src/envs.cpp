#include "fprl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fprl::envs {

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

void check_action(const EnvSpec& spec, int action) {
  if (action < 0 || action >= spec.action_count)
    throw std::invalid_argument(spec.name + ": action " + std::to_string(action) +
                                " out of range");
}

void check_open(const EnvSpec& spec, bool open) {
  if (!open)
    throw std::invalid_argument(spec.name + ": step() on a finished episode; call reset()");
}

}  // namespace

// ---------------------------------------------------------------------------
// species

SpeciesEnv::SpeciesEnv(const config::RunConfig& cfg, std::uint64_t seed)
    : r_a_(cfg.get_double("env.species.r_a")),
      r_o_(cfg.get_double("env.species.r_o")),
      c_p_(cfg.get_double("env.species.c_p")),
      h_(cfg.get_double("env.species.h")),
      starve_(cfg.get_double("env.species.starve")),
      poach_(cfg.get_double("env.species.poach")),
      poach_anti_(cfg.get_double("env.species.poach_anti")),
      poach_half_(cfg.get_double("env.species.poach_half")),
      intro_delta_(cfg.get_double("env.species.intro_delta")),
      control_delta_(cfg.get_double("env.species.control_delta")),
      half_control_delta_(cfg.get_double("env.species.half_control_delta")),
      spill_prob_(cfg.get_double("env.species.spill_prob")),
      spill_factor_(cfg.get_double("env.species.spill_factor")),
      extinct_threshold_(cfg.get_double("env.species.extinct_threshold")),
      init_low_(cfg.get_double("env.species.init_low")),
      init_high_(cfg.get_double("env.species.init_high")),
      episode_len_(cfg.get_int("env.species.episode_len")),
      rng_(seed) {
  spec_ = {"species", 2, 5, 2, episode_len_};
}

std::vector<double> SpeciesEnv::reset() {
  x_o_ = rng_.uniform(init_low_, init_high_);
  x_a_ = rng_.uniform(init_low_, init_high_);
  otter_extinct_ = abalone_extinct_ = false;
  tick_ = 0;
  episode_open_ = true;
  return observe();
}

Transition SpeciesEnv::step(int action) {
  check_open(spec_, episode_open_);
  check_action(spec_, action);

  Transition tr;
  tr.observation = observe();
  tr.action = action;

  double poach = poach_;
  switch (action) {
    case 0:  // introduce otters; pointless once the species is gone
      if (!otter_extinct_) x_o_ = clamp01(x_o_ + intro_delta_);
      break;
    case 1:
      poach = poach_anti_;
      break;
    case 2:
      x_o_ = clamp01(x_o_ - control_delta_);
      break;
    case 3:
      poach = poach_half_;
      x_o_ = clamp01(x_o_ - half_control_delta_);
      break;
    case 4:
      break;
  }

  // Abalone first; the otter update below sees the new prey density.
  double xa = x_a_ + r_a_ * x_a_ * (1.0 - x_a_) - c_p_ * x_o_ * x_a_ - poach;
  xa = clamp01(xa);
  if (xa < extinct_threshold_) xa = 0.0;
  if (abalone_extinct_) xa = 0.0;
  abalone_extinct_ = xa == 0.0;
  x_a_ = xa;

  // Growth needs prey; a prey shortfall turns into starvation mortality.
  const double availability = std::min(1.0, x_a_ / h_);
  double xo = x_o_ + r_o_ * x_o_ * (1.0 - x_o_) * availability -
              starve_ * x_o_ * (1.0 - availability);
  // One spill draw per tick, kept unconditional so the stream advances the
  // same way on every path.
  const bool spill = rng_.bernoulli(spill_prob_);
  if (spill) xo *= spill_factor_;
  xo = clamp01(xo);
  if (xo < extinct_threshold_) xo = 0.0;
  if (otter_extinct_) xo = 0.0;
  otter_extinct_ = xo == 0.0;
  x_o_ = xo;

  ++tick_;
  tr.reward = {x_o_, x_a_};
  tr.next_observation = observe();
  tr.terminal = tick_ >= episode_len_;
  if (tr.terminal) episode_open_ = false;
  return tr;
}

// ---------------------------------------------------------------------------
// resources

ResourceEnv::ResourceEnv(const config::RunConfig& cfg, std::uint64_t seed)
    : gold_value_(cfg.get_double("env.resources.gold_value")),
      gem_value_(cfg.get_double("env.resources.gem_value")),
      stone_value_(cfg.get_double("env.resources.stone_value")),
      episode_len_(cfg.get_int("env.resources.episode_len")),
      rng_(seed) {
  spec_ = {"resources", 25, 4, 3, episode_len_};
}

int ResourceEnv::draw_free_cell(int skip_slot) {
  // Free = not the agent's cell and not any other item's cell. Enumerated in
  // row-major order so the uniform pick is reproducible.
  std::array<bool, kCells> taken{};
  taken[static_cast<std::size_t>(agent_)] = true;
  for (int s = 0; s < 4; ++s)
    if (s != skip_slot) taken[static_cast<std::size_t>(items_[static_cast<std::size_t>(s)])] = true;

  int free_count = 0;
  for (bool t : taken)
    if (!t) ++free_count;
  int pick = rng_.uniform_int(free_count);
  for (int c = 0; c < kCells; ++c) {
    if (taken[static_cast<std::size_t>(c)]) continue;
    if (pick == 0) return c;
    --pick;
  }
  throw std::logic_error("resources: no free cell");  // unreachable, 20 cells free
}

std::vector<double> ResourceEnv::reset() {
  agent_ = rng_.uniform_int(kCells);
  for (int s = 0; s < 4; ++s) {
    items_[static_cast<std::size_t>(s)] = -1;
    // placement must skip the not-yet-placed slots too
    std::array<bool, kCells> taken{};
    taken[static_cast<std::size_t>(agent_)] = true;
    for (int p = 0; p < s; ++p) taken[static_cast<std::size_t>(items_[static_cast<std::size_t>(p)])] = true;
    int free_count = 0;
    for (bool t : taken)
      if (!t) ++free_count;
    int pick = rng_.uniform_int(free_count);
    for (int c = 0; c < kCells; ++c) {
      if (taken[static_cast<std::size_t>(c)]) continue;
      if (pick == 0) {
        items_[static_cast<std::size_t>(s)] = c;
        break;
      }
      --pick;
    }
  }
  collected_ = {false, false, false};
  tick_ = 0;
  episode_open_ = true;
  return observe();
}

std::vector<double> ResourceEnv::observe() const {
  const int row = agent_ / kSide, col = agent_ % kSide;
  const double span = kSide - 1;
  std::vector<double> obs;
  obs.reserve(static_cast<std::size_t>(spec_.observation_width));
  obs.push_back(row / span);
  obs.push_back(col / span);
  // Item slots sorted nearest first by Manhattan distance (ties keep the
  // gold, gem, stone, stone slot order), each as a displacement pair plus a
  // type one-hot. The sort means "walk toward the first slot" is already a
  // competent gathering policy, and the one-hot is what lets a policy treat
  // the types differently at all.
  std::array<int, 4> order{0, 1, 2, 3};
  std::array<int, 4> dist{};
  for (int s = 0; s < 4; ++s) {
    const int item = items_[static_cast<std::size_t>(s)];
    dist[static_cast<std::size_t>(s)] =
        std::abs(item / kSide - row) + std::abs(item % kSide - col);
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)];
  });
  for (const int s : order) {
    const int item = items_[static_cast<std::size_t>(s)];
    obs.push_back((item / kSide - row) / span);
    obs.push_back((item % kSide - col) / span);
    const int objective = s < 2 ? s : 2;
    for (int j = 0; j < 3; ++j) obs.push_back(j == objective ? 1.0 : 0.0);
  }
  for (const bool c : collected_) obs.push_back(c ? 1.0 : 0.0);
  return obs;
}

Transition ResourceEnv::step(int action) {
  check_open(spec_, episode_open_);
  check_action(spec_, action);

  Transition tr;
  tr.observation = observe();
  tr.action = action;

  int row = agent_ / kSide, col = agent_ % kSide;
  switch (action) {
    case 0: row = std::max(0, row - 1); break;          // up
    case 1: row = std::min(kSide - 1, row + 1); break;  // down
    case 2: col = std::max(0, col - 1); break;          // left
    case 3: col = std::min(kSide - 1, col + 1); break;  // right
  }
  agent_ = row * kSide + col;

  tr.reward = {0.0, 0.0, 0.0};
  collected_ = {false, false, false};
  for (int s = 0; s < 4; ++s) {
    if (items_[static_cast<std::size_t>(s)] != agent_) continue;
    const int objective = s < 2 ? s : 2;
    const double value = s == 0 ? gold_value_ : (s == 1 ? gem_value_ : stone_value_);
    tr.reward[static_cast<std::size_t>(objective)] = value;
    collected_[static_cast<std::size_t>(objective)] = true;
    items_[static_cast<std::size_t>(s)] = draw_free_cell(s);
    break;  // cells are distinct, at most one item here
  }

  ++tick_;
  tr.next_observation = observe();
  tr.terminal = tick_ >= episode_len_;
  if (tr.terminal) episode_open_ = false;
  return tr;
}

// ---------------------------------------------------------------------------
// traffic

TrafficEnv::TrafficEnv(const config::RunConfig& cfg, std::uint64_t seed)
    : release_(cfg.get_int("env.traffic.release")),
      switch_delay_(cfg.get_int("env.traffic.switch_delay")),
      episode_len_(cfg.get_int("env.traffic.episode_len")),
      wait_scale_(cfg.get_double("env.traffic.wait_scale")),
      queue_norm_(cfg.get_double("env.traffic.queue_norm")),
      wait_norm_(cfg.get_double("env.traffic.wait_norm")),
      rng_(seed) {
  arrival_p_ = {cfg.get_double("env.traffic.p0"), cfg.get_double("env.traffic.p1"),
                cfg.get_double("env.traffic.p2"), cfg.get_double("env.traffic.p3")};
  spec_ = {"traffic", 12, 4, 4, episode_len_};
}

std::vector<double> TrafficEnv::reset() {
  queue_ = {0, 0, 0, 0};
  wait_ = {0, 0, 0, 0};
  target_ = 0;
  all_red_ = 0;
  tick_ = 0;
  episode_open_ = true;
  return observe();
}

std::vector<double> TrafficEnv::observe() const {
  std::vector<double> obs(12, 0.0);
  for (int i = 0; i < 4; ++i) {
    obs[static_cast<std::size_t>(i)] = static_cast<double>(wait_[static_cast<std::size_t>(i)]) / wait_norm_;
    obs[static_cast<std::size_t>(4 + i)] =
        static_cast<double>(queue_[static_cast<std::size_t>(i)]) / queue_norm_;
  }
  obs[static_cast<std::size_t>(8 + target_)] = 1.0;
  return obs;
}

Transition TrafficEnv::step(int action) {
  check_open(spec_, episode_open_);
  check_action(spec_, action);

  Transition tr;
  tr.observation = observe();
  tr.action = action;

  // Re-selecting the current target never restarts the all-red phase.
  if (action != target_) {
    target_ = action;
    all_red_ = switch_delay_;
  }

  for (int i = 0; i < 4; ++i)
    if (rng_.bernoulli(arrival_p_[static_cast<std::size_t>(i)]))
      ++queue_[static_cast<std::size_t>(i)];

  if (all_red_ > 0) {
    --all_red_;  // nobody moves while the intersection clears
  } else {
    queue_[static_cast<std::size_t>(target_)] =
        std::max(0, queue_[static_cast<std::size_t>(target_)] - release_);
  }

  tr.reward.assign(4, 0.0);
  for (int i = 0; i < 4; ++i) {
    wait_[static_cast<std::size_t>(i)] += queue_[static_cast<std::size_t>(i)];
    tr.reward[static_cast<std::size_t>(i)] =
        -static_cast<double>(queue_[static_cast<std::size_t>(i)]) / wait_scale_;
  }

  ++tick_;
  tr.next_observation = observe();
  tr.terminal = tick_ >= episode_len_;
  if (tr.terminal) episode_open_ = false;
  return tr;
}

// ---------------------------------------------------------------------------
// bandit

BanditEnv::BanditEnv(const config::RunConfig& cfg, std::uint64_t seed)
    : arm0_(cfg.get_double("env.bandit.arm0")),
      arm1_(cfg.get_double("env.bandit.arm1")),
      episode_len_(cfg.get_int("env.bandit.episode_len")) {
  (void)seed;  // fully deterministic
  spec_ = {"bandit", 1, 2, 1, episode_len_};
}

std::vector<double> BanditEnv::reset() {
  tick_ = 0;
  episode_open_ = true;
  return {1.0};
}

Transition BanditEnv::step(int action) {
  check_open(spec_, episode_open_);
  check_action(spec_, action);
  Transition tr;
  tr.observation = {1.0};
  tr.action = action;
  tr.reward = {action == 0 ? arm0_ : arm1_};
  ++tick_;
  tr.next_observation = {1.0};
  tr.terminal = tick_ >= episode_len_;
  if (tr.terminal) episode_open_ = false;
  return tr;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Env> make_env(const std::string& name, const config::RunConfig& cfg,
                              std::uint64_t seed) {
  if (name == "species") return std::make_unique<SpeciesEnv>(cfg, seed);
  if (name == "resources") return std::make_unique<ResourceEnv>(cfg, seed);
  if (name == "traffic") return std::make_unique<TrafficEnv>(cfg, seed);
  if (name == "bandit") return std::make_unique<BanditEnv>(cfg, seed);
  throw config::ConfigError("env: unknown environment '" + name + "'");
}

std::vector<std::string> env_names() { return {"species", "resources", "traffic", "bandit"}; }

}  // namespace fprl::envs
