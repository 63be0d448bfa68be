#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fprl {

// SplitMix64 finalizer, the seed-mixing primitive used everywhere below.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives the seed of sub-stream `index` from `seed`.
///
/// derive_seed(s, i) = splitmix64(splitmix64(s) ^ splitmix64(i * GOLDEN + 1)).
/// Chained calls form a tree of streams; draws from one stream never depend
/// on how many values a sibling stream consumed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^
                    splitmix64(index * 0x9e3779b97f4a7c15ULL + 1));
}

// Stream indices hung off a run's master seed. Each component draws from its
// own stream, so reconfiguring one component cannot perturb another's draws.
namespace stream {
inline constexpr std::uint64_t env = 1;           // training environment
inline constexpr std::uint64_t action = 2;        // rollout action sampling
inline constexpr std::uint64_t policy_init = 3;   // policy weight init
inline constexpr std::uint64_t critic_init = 4;   // critic weight init
inline constexpr std::uint64_t reward_init = 5;   // reward-model weight init
inline constexpr std::uint64_t oracle = 6;        // preference collection + labels
inline constexpr std::uint64_t pref_env = 7;      // environment used for preference rollouts
inline constexpr std::uint64_t minibatch = 8;     // PPO minibatch shuffling
inline constexpr std::uint64_t pref_shuffle = 9;  // reward-model minibatch shuffling
inline constexpr std::uint64_t eval_env = 10;     // evaluation env, per-trajectory sub-streams
inline constexpr std::uint64_t eval_action = 11;  // evaluation action sampling, per-trajectory
}  // namespace stream

/// Deterministic RNG wrapper. The engine is the standardized mt19937_64;
/// all conversions to doubles/ints are done by hand so that every draw is
/// reproducible bit-for-bit independent of the standard library in use.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Modulo bias is negligible for the small n
  /// used here and keeps the draw count at exactly one per call.
  int uniform_int(int n) {
    return static_cast<int>(next() % static_cast<std::uint64_t>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates shuffle. std::shuffle is avoided because its draw sequence
  /// is implementation-defined.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = next() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fprl
