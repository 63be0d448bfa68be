#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fprl/config.hpp"
#include "fprl/rng.hpp"
#include "fprl/welfare.hpp"

namespace fprl::envs {

struct EnvSpec {
  std::string name;
  int observation_width = 0;
  int action_count = 0;
  int objective_count = 0;
  int max_episode_length = 0;
};

struct Transition {
  std::vector<double> observation;       // observation the action was taken from
  int action = 0;
  welfare::UtilityVector reward;         // one component per objective
  std::vector<double> next_observation;
  bool terminal = false;
};

/// Episodic multi-objective environment. reset() starts a fresh episode and
/// returns the initial observation; step() throws if called on a finished
/// episode or with an out-of-range action. All randomness comes from the
/// env's own stream seeded at construction, so a (seed, action sequence)
/// pair fully determines every trajectory.
class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual std::vector<double> reset() = 0;
  virtual Transition step(int action) = 0;
};

/// Instantiates a bundled environment ("species", "resources", "traffic" or
/// "bandit") with its constants taken from the env.<name>.* config keys.
/// Unknown names throw config::ConfigError.
std::unique_ptr<Env> make_env(const std::string& name, const config::RunConfig& cfg,
                              std::uint64_t seed);

std::vector<std::string> env_names();

/// Two-species conservation model: a predator (otter) and its prey
/// (abalone), both as densities in [0, 1]. Per tick the manager picks one of
/// five actions (introduce otters / antipoaching patrol / otter control /
/// half patrol + half control / nothing), then
///   abalone grows logistically, loses c_p * x_o * x_a to predation and a
///     flat `poach` amount set by the action,
///   otters grow logistically, gated by prey availability min(1, x_a / h),
///     and starve at rate `starve` times the availability shortfall,
///   an oil spill scales the otter density by spill_factor with probability
///     spill_prob.
/// A density below extinct_threshold becomes 0 and that species stays absent
/// for the rest of the episode (introductions included). The reward is the
/// post-transition density pair (otter, abalone).
class SpeciesEnv : public Env {
 public:
  SpeciesEnv(const config::RunConfig& cfg, std::uint64_t seed);
  const EnvSpec& spec() const override { return spec_; }
  std::vector<double> reset() override;
  Transition step(int action) override;

  double otter_density() const { return x_o_; }
  double abalone_density() const { return x_a_; }

 private:
  std::vector<double> observe() const { return {x_o_, x_a_}; }

  EnvSpec spec_;
  double r_a_, r_o_, c_p_, h_, starve_;
  double poach_, poach_anti_, poach_half_;
  double intro_delta_, control_delta_, half_control_delta_;
  double spill_prob_, spill_factor_, extinct_threshold_;
  double init_low_, init_high_;
  int episode_len_;

  Rng rng_;
  double x_o_ = 0.0, x_a_ = 0.0;
  bool otter_extinct_ = false, abalone_extinct_ = false;
  int tick_ = 0;
  bool episode_open_ = false;
};

/// 5x5 gathering grid with four items: one gold, one gem, two stones. The
/// agent moves in the four cardinal directions (moves off the border are
/// no-ops); walking onto an item collects it, pays its value on the matching
/// objective (gold, gem, stone) and respawns it on a uniformly random free
/// cell. Observation (25): agent row/4, col/4, then the four item slots
/// sorted nearest first by Manhattan distance, each as its displacement from
/// the agent (row delta, col delta) / 4 followed by a gold/gem/stone
/// one-hot, then per objective a flag that is 1 exactly when an item of that
/// type was collected on the transition into this state. The flags stand in
/// for the collection history: a per-step reward model cannot see pickups
/// at all without them (the item has already moved by the time the next
/// observation is taken), while raw cumulative counts would let it rank
/// segments by how much was collected before the segment started instead of
/// crediting the pickups inside it.
class ResourceEnv : public Env {
 public:
  ResourceEnv(const config::RunConfig& cfg, std::uint64_t seed);
  const EnvSpec& spec() const override { return spec_; }
  std::vector<double> reset() override;
  Transition step(int action) override;

  int agent_cell() const { return agent_; }
  std::array<int, 4> item_cells() const { return items_; }  // gold, gem, stone, stone

 private:
  static constexpr int kSide = 5;
  static constexpr int kCells = kSide * kSide;

  std::vector<double> observe() const;
  int draw_free_cell(int skip_slot);

  EnvSpec spec_;
  double gold_value_, gem_value_, stone_value_;
  int episode_len_;

  Rng rng_;
  int agent_ = 0;
  std::array<int, 4> items_{};          // slot 0 gold, 1 gem, 2-3 stones
  std::array<bool, 3> collected_{};     // pickup on the last transition, per objective
  int tick_ = 0;
  bool episode_open_ = false;
};

/// Four-way intersection. Each side i receives a car with probability p_i
/// per tick; the green side releases up to `release` cars per tick. The
/// action selects which side should be green; changing the target inserts
/// switch_delay all-red ticks before the new side starts releasing. Reward
/// component i is -queue_i / wait_scale after the tick resolves.
/// Observation: per-side accumulated waits / wait_norm (4) ++ queue lengths
/// / queue_norm (4) ++ one-hot of the target side (4).
class TrafficEnv : public Env {
 public:
  TrafficEnv(const config::RunConfig& cfg, std::uint64_t seed);
  const EnvSpec& spec() const override { return spec_; }
  std::vector<double> reset() override;
  Transition step(int action) override;

  std::array<int, 4> queue_lengths() const { return queue_; }
  std::array<long, 4> accumulated_waits() const { return wait_; }
  int target_side() const { return target_; }
  int all_red_remaining() const { return all_red_; }

 private:
  std::vector<double> observe() const;

  EnvSpec spec_;
  std::array<double, 4> arrival_p_{};
  int release_, switch_delay_, episode_len_;
  double wait_scale_, queue_norm_, wait_norm_;

  Rng rng_;
  std::array<int, 4> queue_{};
  std::array<long, 4> wait_{};
  int target_ = 0;
  int all_red_ = 0;
  int tick_ = 0;
  bool episode_open_ = false;
};

/// Stateless two-armed bandit used by sanity and degeneration tests: one
/// constant observation, two actions paying arm0 / arm1 on a single
/// objective, fixed episode length.
class BanditEnv : public Env {
 public:
  BanditEnv(const config::RunConfig& cfg, std::uint64_t seed);
  const EnvSpec& spec() const override { return spec_; }
  std::vector<double> reset() override;
  Transition step(int action) override;

 private:
  EnvSpec spec_;
  double arm0_, arm1_;
  int episode_len_;
  int tick_ = 0;
  bool episode_open_ = false;
};

}  // namespace fprl::envs
