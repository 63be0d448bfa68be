#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fprl/config.hpp"
#include "fprl/envs.hpp"
#include "fprl/mlp.hpp"
#include "fprl/rng.hpp"
#include "fprl/welfare.hpp"

namespace fprl::agent {

enum class Variant { PpoGroundTruth, PbrlScalar, Fpbrl };

Variant parse_variant(const std::string& name);  // ConfigError on unknown names
std::string variant_name(Variant v);

/// On-policy rollout storage. reward_width is the width of the training
/// reward (1 for the scalar variants, the objective count for the fair one);
/// all per-step vector quantities are stored flat, step-major.
struct RolloutBuffer {
  int observation_width = 0;
  int reward_width = 0;

  std::vector<double> observations;
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<unsigned char> terminal;

  // observation after the last stored step; bootstraps truncated episodes
  std::vector<double> final_observation;

  // filled by gae_advantages / ggf_scalarize_advantages
  std::vector<double> values;
  std::vector<double> advantages;
  std::vector<double> value_targets;
  std::vector<double> scalar_advantages;

  int size() const { return static_cast<int>(actions.size()); }
  void clear();
  std::span<const double> observation(int t) const;
};

/// Exponential or plain running mean of completed-episode return vectors.
/// decay = 0 requests the plain mean, accumulated as (sum, count) so that
/// within-iteration update order cannot change the result.
class ReturnEstimate {
 public:
  ReturnEstimate(int width, double decay);
  void update(const welfare::UtilityVector& episode_return);
  bool has_value() const { return count_ > 0; }
  welfare::UtilityVector mean() const;

 private:
  double decay_;
  long count_ = 0;
  welfare::UtilityVector acc_;  // EMA value, or plain sum when decay == 0
};

/// Generalized advantage estimation per reward component. Fills values,
/// advantages and value_targets (targets = advantages + values). Terminal
/// steps bootstrap 0; a truncated tail bootstraps the critic at
/// final_observation.
void gae_advantages(RolloutBuffer& buffer, const net::Mlp& critic, double gamma,
                    double lambda);

/// Per-step dot of the advantage vector with the welfare weights permuted by
/// the return estimate: objectives currently worst-off in j_mean get the
/// largest weights. With width 1 and w = [1] this is the identity on the
/// scalar advantage. An empty j_mean (no completed episode yet) applies the
/// weights in index order.
std::vector<double> ggf_scalar_products(const RolloutBuffer& buffer,
                                        const welfare::UtilityVector& j_mean,
                                        const welfare::GiniWeights& w);

/// In-place standardization to zero mean / unit variance; a zero-variance
/// vector becomes all zeros instead of dividing by nothing.
void standardize(std::vector<double>& xs);

/// ggf_scalar_products followed by standardize, stored into
/// buffer.scalar_advantages.
void ggf_scalarize_advantages(RolloutBuffer& buffer,
                              const welfare::UtilityVector& j_mean,
                              const welfare::GiniWeights& w);

struct PpoSettings {
  double clip_epsilon = 0.2;
  double entropy_coef = 0.01;
  double grad_clip = 0.5;
  int epochs = 4;
  int minibatch = 64;
};

/// Clipped-surrogate term of one sample: min(ratio * adv, clip(ratio) * adv).
/// Also reports whether the unclipped branch is active, i.e. whether the
/// ratio gradient flows.
std::pair<double, bool> clipped_surrogate(double ratio, double advantage,
                                          double clip_epsilon);

struct PolicyLossResult {
  double loss = 0.0;       // -(mean surrogate) - entropy_coef * mean entropy
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double mean_entropy = 0.0;
  std::vector<double> gradient;
};

/// Policy loss and gradient over the index subset `idx` of the buffer.
/// Factored out of ppo_update so tests can difference it directly.
PolicyLossResult policy_surrogate_loss(const net::Mlp& policy,
                                       const RolloutBuffer& buffer,
                                       std::span<const int> idx,
                                       const PpoSettings& settings);

struct PpoDiagnostics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double mean_entropy = 0.0;
};

/// Minibatch PPO over the buffer: `epochs` shuffled passes updating policy
/// and critic with per-minibatch Adam steps and gradient-norm clipping.
/// Diagnostics are averaged over all minibatches processed.
PpoDiagnostics ppo_update(net::Mlp& policy, net::Mlp& critic,
                          const RolloutBuffer& buffer, const PpoSettings& settings,
                          net::Adam& policy_opt, net::Adam& critic_opt,
                          Rng& shuffle_rng);

struct TrainSummary {
  int iterations = 0;
  long env_steps = 0;
  int preference_count = 0;
  std::filesystem::path policy_checkpoint;
};

/// Full training run for the configured variant/env/seed. Writes into
/// out_dir: metrics.csv (appended row by row, so an aborted run keeps its
/// partial trace), config_used.cfg, final checkpoints (policy.ckpt,
/// critic.ckpt, reward.ckpt for the learned variants) and preferences.csv.
TrainSummary train(const config::RunConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace fprl::agent
