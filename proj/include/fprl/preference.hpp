#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "fprl/envs.hpp"
#include "fprl/mlp.hpp"
#include "fprl/rng.hpp"
#include "fprl/welfare.hpp"

namespace fprl::pref {

struct SegmentStep {
  std::vector<double> observation;
  int action = 0;
  welfare::UtilityVector reward;  // ground-truth vector reward at this step
};

struct Segment {
  std::vector<SegmentStep> steps;
};

/// A labeled pair. Soft labels: (1,0) A preferred, (0,1) B preferred,
/// (0.5,0.5) tie.
struct PreferenceRecord {
  Segment a, b;
  double mu_a = 0.5, mu_b = 0.5;
};

/// How the synthetic oracle scores a segment's ground-truth return vector:
/// through the Gini welfare function, or as an unweighted component sum (the
/// classic single-objective teacher).
enum class OracleMode { Welfare, ScalarSum };

/// Learned vector reward head over (observation, one-hot action) inputs.
///
/// Keeps per-objective standardization statistics refreshed from a ring
/// buffer of recently seen inputs. Preference training always reads the raw
/// bounded head; the policy learner consumes standardized() so reward scale
/// drift between training sessions cannot destabilize the critic.
/// standardized() centers each objective but divides all of them by one
/// shared scale (the mean of the per-objective spreads): scaling each head
/// by its own spread would promote a nearly flat head to unit-variance
/// noise with as much influence on the policy as the informative heads.
class RewardModel {
 public:
  /// Standard architecture: two tanh layers of 64 with a tanh output head.
  RewardModel(int obs_width, int action_count, int objectives, Rng& init_rng);

  /// Wraps an existing network (tests use this to install tiny or unbounded
  /// heads). Input width must equal obs_width + action_count.
  RewardModel(net::Mlp net, int obs_width, int action_count);

  int objectives() const { return net_.output_width(); }
  int observation_width() const { return obs_w_; }
  int action_count() const { return act_n_; }

  net::Mlp& network() { return net_; }
  const net::Mlp& network() const { return net_; }

  welfare::UtilityVector raw(std::span<const double> obs, int action) const;
  welfare::UtilityVector standardized(std::span<const double> obs, int action) const;

  /// Remembers an input for the next normalization refresh (ring buffer,
  /// capacity 2048).
  void record_input(std::span<const double> obs, int action);

  /// Recomputes per-objective output mean/std over the remembered inputs.
  /// No-op while the buffer is empty.
  void refresh_normalization();

  const std::vector<double>& normalization_mean() const { return mean_; }
  const std::vector<double>& normalization_std() const { return stddev_; }

  std::vector<double> stack_input(std::span<const double> obs, int action) const;

 private:
  net::Mlp net_;
  int obs_w_, act_n_;
  std::vector<double> mean_, stddev_;
  std::vector<std::vector<double>> recent_;
  std::size_t next_slot_ = 0;
  static constexpr std::size_t kRingCapacity = 2048;
};

/// Discounted return of a segment: sum_t gamma^(t-1) * r_t, from the stored
/// ground-truth rewards or from the model's raw head.
welfare::UtilityVector segment_return(const Segment& seg, double gamma,
                                      bool ground_truth,
                                      const RewardModel* model = nullptr);

/// Bradley-Terry probability that A is preferred, with both return vectors
/// collapsed through the Gini welfare function first. Computed in log space,
/// so arbitrarily large welfare gaps saturate cleanly instead of overflowing.
double welfare_preference_probability(const welfare::UtilityVector& return_a,
                                      const welfare::UtilityVector& return_b,
                                      const welfare::GiniWeights& w);

/// Labels a segment pair from ground-truth returns discounted by `gamma`
/// (pass 1.0 for undiscounted comparisons). Deterministic mode prefers the
/// higher score and emits (0.5, 0.5) on exact ties; noisy mode instead draws
/// the label from the Bradley-Terry probability using `label_rng`.
PreferenceRecord synthetic_oracle(Segment a, Segment b, OracleMode mode,
                                  const welfare::GiniWeights& w, double gamma,
                                  bool noisy = false, Rng* label_rng = nullptr);

struct LossResult {
  double loss = 0.0;               // mean cross-entropy over the batch
  std::vector<double> gradient;    // w.r.t. the model's flat parameters
};

/// Mean preference cross-entropy and its gradient. The model's returns are
/// collapsed with `w`; a one-output model with w = [1] is exactly the scalar
/// formulation. OpenMP-parallel over records, with per-record results
/// reduced in index order so the outcome is independent of thread count.
LossResult preference_loss(const RewardModel& model,
                           std::span<const PreferenceRecord> batch,
                           const welfare::GiniWeights& w, double gamma);

/// Serial reference implementation; bit-identical to preference_loss.
LossResult preference_loss_serial(const RewardModel& model,
                                  std::span<const PreferenceRecord> batch,
                                  const welfare::GiniWeights& w, double gamma);

/// Thrown when reward-model training hits a non-finite loss; carries the
/// per-epoch loss trace collected so far.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), loss_trace(std::move(trace)) {}
  std::vector<double> loss_trace;
};

/// Minibatch Adam over the full dataset for `epochs` passes; returns the
/// mean loss per epoch. Zero epochs is a complete no-op. Refreshes the
/// model's normalization statistics after the last epoch.
std::vector<double> train_reward_model(RewardModel& model,
                                       std::span<const PreferenceRecord> dataset,
                                       int epochs, int batch_size, net::Adam& opt,
                                       const welfare::GiniWeights& w, double gamma,
                                       Rng& shuffle_rng);

struct CollectResult {
  std::vector<PreferenceRecord> records;
  long env_steps = 0;
};

/// Rolls out `episodes` fresh episodes with the given policy (actions
/// sampled from its categorical head using `oracle_rng`), slices them into
/// length-k segments at uniform random offsets, pairs the segments uniformly
/// at random without replacement and labels each pair with the synthetic
/// oracle. Episodes shorter than k are skipped; if no episode can yield a
/// segment the call throws.
CollectResult collect_and_label(const net::Mlp& policy, envs::Env& env, int pairs,
                                int segment_len, OracleMode mode,
                                const welfare::GiniWeights& w, double gamma,
                                int episodes, bool noisy, Rng& oracle_rng);

/// CSV persistence. One row per record with columns segment_a, segment_b,
/// mu_a, mu_b; each segment cell packs "k;obs_w;reward_w;" followed by the
/// observation, action and reward blocks as semicolon-separated
/// round-trippable decimals.
void save_dataset_csv(const std::filesystem::path& path,
                      std::span<const PreferenceRecord> records);
std::vector<PreferenceRecord> load_dataset_csv(const std::filesystem::path& path);

}  // namespace fprl::pref
