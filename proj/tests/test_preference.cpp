#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <omp.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "fprl/config.hpp"
#include "fprl/envs.hpp"
#include "fprl/mlp.hpp"
#include "fprl/preference.hpp"
#include "fprl/rng.hpp"
#include "fprl/welfare.hpp"

using namespace fprl;
using pref::PreferenceRecord;
using pref::RewardModel;
using pref::Segment;
using welfare::GiniWeights;
using welfare::UtilityVector;

namespace {

Segment make_segment(std::vector<UtilityVector> rewards, int obs_width = 2) {
  Segment seg;
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    pref::SegmentStep step;
    step.observation.assign(static_cast<std::size_t>(obs_width),
                            0.1 * static_cast<double>(t));
    step.action = static_cast<int>(t % 2);
    step.reward = std::move(rewards[t]);
    seg.steps.push_back(std::move(step));
  }
  return seg;
}

Segment random_segment(Rng& rng, int length, int obs_width, int actions, int k) {
  Segment seg;
  for (int t = 0; t < length; ++t) {
    pref::SegmentStep step;
    step.observation.resize(static_cast<std::size_t>(obs_width));
    for (double& x : step.observation) x = rng.uniform(-1.0, 1.0);
    step.action = rng.uniform_int(actions);
    step.reward.resize(static_cast<std::size_t>(k));
    for (double& r : step.reward) r = rng.uniform(-1.0, 1.0);
    seg.steps.push_back(std::move(step));
  }
  return seg;
}

std::vector<PreferenceRecord> random_batch(Rng& rng, int n, int length, int obs_width,
                                           int actions, int k) {
  std::vector<PreferenceRecord> batch;
  for (int i = 0; i < n; ++i) {
    PreferenceRecord rec;
    rec.a = random_segment(rng, length, obs_width, actions, k);
    rec.b = random_segment(rng, length, obs_width, actions, k);
    const int lab = rng.uniform_int(3);
    rec.mu_a = lab == 0 ? 1.0 : (lab == 1 ? 0.0 : 0.5);
    rec.mu_b = 1.0 - rec.mu_a;
    batch.push_back(std::move(rec));
  }
  return batch;
}

RewardModel small_model(Rng& rng, int obs_width, int actions, int k) {
  return RewardModel(net::Mlp::glorot({obs_width + actions, 8, k}, net::Hidden::Tanh,
                                      net::Output::Tanh, rng),
                     obs_width, actions);
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("segment returns discount from the first step") {
  const Segment seg = make_segment({{1.0, 0.0}, {0.0, 1.0}});
  const UtilityVector ret = pref::segment_return(seg, 0.5, true);
  CHECK(ret == UtilityVector{1.0, 0.5});
  CHECK(pref::segment_return(seg, 1.0, true) == UtilityVector{1.0, 1.0});
}

TEST_CASE("segment returns through the model use its raw head") {
  Rng rng(21);
  const RewardModel model = small_model(rng, 2, 2, 2);
  const Segment seg = make_segment({{5.0, 5.0}, {5.0, 5.0}});  // ignored by the model
  const UtilityVector ret = pref::segment_return(seg, 1.0, false, &model);
  UtilityVector expect(2, 0.0);
  for (const pref::SegmentStep& step : seg.steps) {
    const UtilityVector r = model.raw(step.observation, step.action);
    for (std::size_t j = 0; j < 2; ++j) expect[j] += r[j];
  }
  CHECK(ret == expect);
}

TEST_CASE("preference probability closed forms") {
  const GiniWeights w1({1.0});
  // welfare gap ln 3 puts the probability at exactly 3/4
  CHECK(pref::welfare_preference_probability({std::log(3.0)}, {0.0}, w1) ==
        doctest::Approx(0.75).epsilon(1e-15));
  CHECK(pref::welfare_preference_probability({2.0}, {2.0}, w1) == 0.5);
  // huge gaps saturate cleanly instead of overflowing
  CHECK(pref::welfare_preference_probability({1000.0}, {0.0}, w1) == 1.0);
  CHECK(pref::welfare_preference_probability({0.0}, {1000.0}, w1) == 0.0);

  // the multi-objective form goes through the welfare of both sides
  const GiniWeights w2({1.0, 0.5});
  const double p = pref::welfare_preference_probability({0.0, 2.0}, {1.0, 1.0}, w2);
  // welfare gap: (0 + 1) - (1 + 0.5) = -0.5
  CHECK(p == doctest::Approx(1.0 / (1.0 + std::exp(0.5))).epsilon(1e-14));
}

TEST_CASE("deterministic oracle prefers the higher score and ties at a half") {
  const GiniWeights w({1.0, 0.5});
  const Segment hi = make_segment({{1.0, 1.0}});
  const Segment lo = make_segment({{0.0, 0.0}});
  const pref::PreferenceRecord ab =
      pref::synthetic_oracle(hi, lo, pref::OracleMode::Welfare, w, 1.0);
  CHECK(ab.mu_a == 1.0);
  CHECK(ab.mu_b == 0.0);
  const pref::PreferenceRecord ba =
      pref::synthetic_oracle(lo, hi, pref::OracleMode::Welfare, w, 1.0);
  CHECK(ba.mu_a == 0.0);
  const pref::PreferenceRecord tie =
      pref::synthetic_oracle(hi, hi, pref::OracleMode::Welfare, w, 1.0);
  CHECK(tie.mu_a == 0.5);
  CHECK(tie.mu_b == 0.5);
}

TEST_CASE("welfare and scalar oracles can disagree") {
  const GiniWeights w({1.0, 0.5});
  // equal sums, but a is balanced and b is lopsided
  const Segment a = make_segment({{1.0, 1.0}});
  const Segment b = make_segment({{0.0, 2.0}});
  const pref::PreferenceRecord by_welfare =
      pref::synthetic_oracle(a, b, pref::OracleMode::Welfare, w, 1.0);
  const pref::PreferenceRecord by_sum =
      pref::synthetic_oracle(a, b, pref::OracleMode::ScalarSum, w, 1.0);
  CHECK(by_welfare.mu_a == 1.0);  // 1.5 vs 1.0 through the welfare lens
  CHECK(by_sum.mu_a == 0.5);      // 2 vs 2 as a plain sum
}

TEST_CASE("noisy oracle draws from the preference probability") {
  const GiniWeights w({1.0});
  const Segment hi = make_segment({{10.0, 0.0}}, 2);
  Segment hi1 = make_segment({{10.0}});
  Segment lo1 = make_segment({{0.0}});
  CHECK_THROWS_AS(
      pref::synthetic_oracle(hi1, lo1, pref::OracleMode::Welfare, w, 1.0, true, nullptr),
      std::invalid_argument);

  Rng rng_a(5), rng_b(5);
  int hard_labels = 0;
  for (int i = 0; i < 200; ++i) {
    const pref::PreferenceRecord ra =
        pref::synthetic_oracle(hi1, lo1, pref::OracleMode::Welfare, w, 1.0, true, &rng_a);
    const pref::PreferenceRecord rb =
        pref::synthetic_oracle(hi1, lo1, pref::OracleMode::Welfare, w, 1.0, true, &rng_b);
    CHECK(ra.mu_a == rb.mu_a);  // same stream, same labels
    CHECK((ra.mu_a == 1.0 || ra.mu_a == 0.0));
    hard_labels += ra.mu_a == 1.0 ? 1 : 0;
  }
  // sigmoid(10) is nearly 1, so almost every draw should favor the winner
  CHECK(hard_labels > 190);
}

TEST_CASE("zero network gives the chance-level loss") {
  Rng rng(31);
  net::Mlp zero({4, 8, 2}, net::Hidden::Tanh, net::Output::Tanh);
  const RewardModel model(std::move(zero), 2, 2);
  const std::vector<PreferenceRecord> batch = random_batch(rng, 12, 5, 2, 2, 2);
  const pref::LossResult res =
      pref::preference_loss_serial(model, batch, GiniWeights({1.0, 0.5}), 0.99);
  CHECK(res.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("loss gradient matches finite differences") {
  Rng rng(32);
  RewardModel model = small_model(rng, 3, 2, 2);
  const std::vector<PreferenceRecord> batch = random_batch(rng, 10, 4, 3, 2, 2);
  const GiniWeights w({1.0, 0.5});
  const pref::LossResult res = pref::preference_loss_serial(model, batch, w, 0.9);
  const double err = net::finite_difference_check(
      model.network(),
      [&](const net::Mlp&) {
        return pref::preference_loss_serial(model, batch, w, 0.9).loss;
      },
      res.gradient, rng);
  CHECK(err < 1e-5);
}

TEST_CASE("parallel and serial losses agree bitwise") {
  Rng rng(33);
  const RewardModel model = small_model(rng, 3, 3, 2);
  const std::vector<PreferenceRecord> batch = random_batch(rng, 33, 6, 3, 3, 2);
  const GiniWeights w({1.0, 0.5});
  omp_set_num_threads(2);
  const pref::LossResult par = pref::preference_loss(model, batch, w, 0.99);
  const pref::LossResult ser = pref::preference_loss_serial(model, batch, w, 0.99);
  CHECK(par.loss == ser.loss);
  CHECK(par.gradient == ser.gradient);
}

TEST_CASE("one objective with unit weight is exactly the scalar formulation") {
  Rng rng(34);
  const RewardModel model = small_model(rng, 3, 2, 1);
  const std::vector<PreferenceRecord> batch = random_batch(rng, 16, 5, 3, 2, 1);
  // labels from the two oracle modes coincide when there is one objective
  for (const PreferenceRecord& rec : batch) {
    const pref::PreferenceRecord lw = pref::synthetic_oracle(
        rec.a, rec.b, pref::OracleMode::Welfare, GiniWeights({1.0}), 0.99);
    const pref::PreferenceRecord ls = pref::synthetic_oracle(
        rec.a, rec.b, pref::OracleMode::ScalarSum, GiniWeights({1.0}), 0.99);
    CHECK(lw.mu_a == ls.mu_a);
    CHECK(lw.mu_b == ls.mu_b);
  }
}

TEST_CASE("deterministic labels ignore positive weight rescaling") {
  Rng rng(35);
  const GiniWeights w({1.0, 0.5});
  const GiniWeights scaled({3.0, 1.5});
  for (int i = 0; i < 50; ++i) {
    const Segment a = random_segment(rng, 4, 2, 2, 2);
    const Segment b = random_segment(rng, 4, 2, 2, 2);
    const pref::PreferenceRecord la =
        pref::synthetic_oracle(a, b, pref::OracleMode::Welfare, w, 0.99);
    const pref::PreferenceRecord lb =
        pref::synthetic_oracle(a, b, pref::OracleMode::Welfare, scaled, 0.99);
    CHECK(la.mu_a == lb.mu_a);
  }
}

TEST_CASE("shifting both segments by a constant reward leaves the label alone") {
  Rng rng(36);
  const GiniWeights w({1.0, 0.5});
  for (int i = 0; i < 50; ++i) {
    Segment a = random_segment(rng, 4, 2, 2, 2);
    Segment b = random_segment(rng, 4, 2, 2, 2);
    const pref::PreferenceRecord before =
        pref::synthetic_oracle(a, b, pref::OracleMode::Welfare, w, 1.0);
    for (Segment* seg : {&a, &b})
      for (pref::SegmentStep& step : seg->steps)
        for (double& r : step.reward) r += 7.5;
    const pref::PreferenceRecord after =
        pref::synthetic_oracle(a, b, pref::OracleMode::Welfare, w, 1.0);
    CHECK(before.mu_a == after.mu_a);
  }
}

TEST_CASE("training with zero epochs is a complete no-op") {
  Rng rng(37), shuffle(38);
  RewardModel model = small_model(rng, 2, 2, 2);
  const std::vector<double> before = model.network().params();
  net::Adam opt(model.network().param_count(), 1e-3);
  const std::vector<PreferenceRecord> batch = random_batch(rng, 8, 4, 2, 2, 2);
  const std::vector<double> trace = pref::train_reward_model(
      model, batch, 0, 4, opt, GiniWeights({1.0, 0.5}), 0.99, shuffle);
  CHECK(trace.empty());
  CHECK(model.network().params() == before);
}

TEST_CASE("uniform labels floor the loss at ln 2") {
  Rng rng(39), shuffle(40);
  RewardModel model = small_model(rng, 2, 2, 2);
  net::Adam opt(model.network().param_count(), 1e-3);
  std::vector<PreferenceRecord> batch = random_batch(rng, 16, 4, 2, 2, 2);
  for (PreferenceRecord& rec : batch) rec.mu_a = rec.mu_b = 0.5;
  const std::vector<double> trace = pref::train_reward_model(
      model, batch, 5, 4, opt, GiniWeights({1.0, 0.5}), 0.99, shuffle);
  REQUIRE(trace.size() == 5);
  for (const double loss : trace) CHECK(loss >= std::log(2.0) - 1e-9);
}

TEST_CASE("training drives the loss down on separable labels") {
  Rng rng(41), shuffle(42);
  RewardModel model = small_model(rng, 2, 2, 1);
  net::Adam opt(model.network().param_count(), 3e-3);
  // labels consistent with a simple rule: the segment with higher summed
  // ground truth wins
  std::vector<PreferenceRecord> batch = random_batch(rng, 32, 4, 2, 2, 1);
  for (PreferenceRecord& rec : batch) {
    const double ra = pref::segment_return(rec.a, 1.0, true)[0];
    const double rb = pref::segment_return(rec.b, 1.0, true)[0];
    rec.mu_a = ra > rb ? 1.0 : 0.0;
    rec.mu_b = 1.0 - rec.mu_a;
  }
  const std::vector<double> trace = pref::train_reward_model(
      model, batch, 30, 8, opt, GiniWeights({1.0}), 1.0, shuffle);
  CHECK(trace.back() < trace.front());
}

TEST_CASE("normalization statistics follow the recorded inputs") {
  Rng rng(43);
  RewardModel model = small_model(rng, 2, 2, 2);
  // before any refresh: identity normalization
  const UtilityVector raw = model.raw(std::vector<double>{0.2, -0.3}, 1);
  const UtilityVector std0 = model.standardized(std::vector<double>{0.2, -0.3}, 1);
  CHECK(raw == std0);

  for (int i = 0; i < 100; ++i) {
    std::vector<double> obs{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    model.record_input(obs, rng.uniform_int(2));
  }
  model.refresh_normalization();
  const std::vector<double>& mean = model.normalization_mean();
  const std::vector<double>& stddev = model.normalization_std();
  const UtilityVector r = model.raw(std::vector<double>{0.2, -0.3}, 1);
  const UtilityVector s = model.standardized(std::vector<double>{0.2, -0.3}, 1);
  // centered per objective, one shared scale across objectives
  const double scale = (stddev[0] + stddev[1]) / 2.0;
  for (std::size_t j = 0; j < 2; ++j)
    CHECK(s[j] == doctest::Approx((r[j] - mean[j]) / scale).epsilon(1e-12));
}

TEST_CASE("collection yields the requested pair count deterministically") {
  const config::RunConfig cfg;
  Rng init(44);
  const net::Mlp policy = net::Mlp::glorot({2, 8, 5}, net::Hidden::Tanh,
                                           net::Output::Linear, init);
  const GiniWeights w({1.0, 0.5});

  std::unique_ptr<envs::Env> env_a = envs::make_env("species", cfg, 7);
  Rng rng_a(9);
  const pref::CollectResult a = pref::collect_and_label(
      policy, *env_a, 12, 25, pref::OracleMode::Welfare, w, 0.99, 4, false, rng_a);
  CHECK(a.records.size() == 12);
  CHECK(a.env_steps > 0);
  for (const PreferenceRecord& rec : a.records) {
    CHECK(rec.a.steps.size() == 25);
    CHECK(rec.b.steps.size() == 25);
    CHECK(rec.mu_a + rec.mu_b == 1.0);
  }

  std::unique_ptr<envs::Env> env_b = envs::make_env("species", cfg, 7);
  Rng rng_b(9);
  const pref::CollectResult b = pref::collect_and_label(
      policy, *env_b, 12, 25, pref::OracleMode::Welfare, w, 0.99, 4, false, rng_b);
  CHECK(a.env_steps == b.env_steps);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(a.records[i].mu_a == b.records[i].mu_a);
    CHECK(a.records[i].a.steps[0].observation == b.records[i].a.steps[0].observation);
  }
}

TEST_CASE("segments longer than the episode are rejected") {
  const config::RunConfig cfg;  // bandit episodes run 10 steps
  Rng init(45), oracle(46);
  const net::Mlp policy = net::Mlp::glorot({1, 4, 2}, net::Hidden::Tanh,
                                           net::Output::Linear, init);
  std::unique_ptr<envs::Env> env = envs::make_env("bandit", cfg, 1);
  CHECK_THROWS_AS(
      pref::collect_and_label(policy, *env, 4, 25, pref::OracleMode::ScalarSum,
                              GiniWeights({1.0}), 0.99, 4, false, oracle),
      std::invalid_argument);
}

TEST_CASE("dataset CSV round trip is byte identical") {
  Rng rng(47);
  const std::vector<PreferenceRecord> batch = random_batch(rng, 6, 3, 4, 3, 2);
  const std::filesystem::path p1 =
      std::filesystem::temp_directory_path() / "fprl_test_prefs1.csv";
  const std::filesystem::path p2 =
      std::filesystem::temp_directory_path() / "fprl_test_prefs2.csv";
  pref::save_dataset_csv(p1, batch);
  const std::vector<PreferenceRecord> loaded = pref::load_dataset_csv(p1);
  REQUIRE(loaded.size() == batch.size());
  pref::save_dataset_csv(p2, loaded);
  CHECK(file_bytes(p1) == file_bytes(p2));
  CHECK(loaded[0].a.steps[0].observation == batch[0].a.steps[0].observation);
  CHECK(loaded[3].mu_a == batch[3].mu_a);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}
