// Wall-clock comparison of the OpenMP kernels against their serial
// references: policy evaluation rollouts and the preference-batch loss.
// Both pairs must agree bitwise; the benchmark asserts that as it times.
#include <omp.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fprl/config.hpp"
#include "fprl/envs.hpp"
#include "fprl/evalharness.hpp"
#include "fprl/mlp.hpp"
#include "fprl/preference.hpp"
#include "fprl/rng.hpp"
#include "fprl/welfare.hpp"

using fprl::Rng;
using fprl::derive_seed;

namespace {

fprl::pref::Segment random_segment(Rng& rng, int length, int obs_width,
                                   int action_count, int objectives) {
  fprl::pref::Segment seg;
  seg.steps.resize(static_cast<std::size_t>(length));
  for (fprl::pref::SegmentStep& step : seg.steps) {
    step.observation.resize(static_cast<std::size_t>(obs_width));
    for (double& x : step.observation) x = rng.uniform(-1.0, 1.0);
    step.action = rng.uniform_int(action_count);
    step.reward.resize(static_cast<std::size_t>(objectives));
    for (double& r : step.reward) r = rng.uniform(-1.0, 1.0);
  }
  return seg;
}

template <typename F>
double best_of(int repeats, F&& body) {
  double best = 1e300;
  for (int i = 0; i < repeats; ++i) {
    const double t0 = omp_get_wtime();
    body();
    const double t1 = omp_get_wtime();
    if (t1 - t0 < best) best = t1 - t0;
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serial vs OpenMP timing for the evaluation and preference kernels"};
  int trajectories = 100;
  int pairs = 256;
  int segment_len = 25;
  int repeats = 3;
  int threads = 0;
  app.add_option("--trajectories", trajectories, "Evaluation episodes per timing run");
  app.add_option("--pairs", pairs, "Preference records in the timed batch");
  app.add_option("--segment-len", segment_len, "Steps per synthetic segment");
  app.add_option("--repeats", repeats, "Timing repetitions (best is reported)");
  app.add_option("--threads", threads, "OpenMP thread count (0 keeps the default)");
  CLI11_PARSE(app, argc, argv);

  if (threads > 0) omp_set_num_threads(threads);
  std::printf("threads: %d\n", omp_get_max_threads());

  const fprl::config::RunConfig cfg;  // defaults: the resources environment
  const std::string env_name = cfg.get_string("env");
  const std::unique_ptr<fprl::envs::Env> probe = fprl::envs::make_env(env_name, cfg, 0);
  const int obs_w = probe->spec().observation_width;
  const int actions = probe->spec().action_count;
  const int k = probe->spec().objective_count;

  Rng init_rng(derive_seed(20240817, fprl::stream::policy_init));
  const fprl::net::Mlp policy =
      fprl::net::Mlp::glorot({obs_w, 64, 64, actions}, fprl::net::Hidden::Tanh,
                             fprl::net::Output::Linear, init_rng);

  fprl::eval::EvalReport serial_report, parallel_report;
  const double t_eval_serial = best_of(repeats, [&] {
    serial_report = fprl::eval::evaluate_serial(policy, env_name, cfg, "bench", 7,
                                                trajectories, false);
  });
  const double t_eval_parallel = best_of(repeats, [&] {
    parallel_report =
        fprl::eval::evaluate(policy, env_name, cfg, "bench", 7, trajectories, false);
  });
  const bool eval_match =
      serial_report.welfare_score == parallel_report.welfare_score &&
      serial_report.mean_return == parallel_report.mean_return;

  Rng data_rng(derive_seed(20240817, fprl::stream::oracle));
  Rng model_rng(derive_seed(20240817, fprl::stream::reward_init));
  fprl::pref::RewardModel model(obs_w, actions, k, model_rng);
  std::vector<fprl::pref::PreferenceRecord> batch;
  batch.reserve(static_cast<std::size_t>(pairs));
  for (int i = 0; i < pairs; ++i) {
    fprl::pref::PreferenceRecord rec;
    rec.a = random_segment(data_rng, segment_len, obs_w, actions, k);
    rec.b = random_segment(data_rng, segment_len, obs_w, actions, k);
    rec.mu_a = (i % 2 == 0) ? 1.0 : 0.0;
    rec.mu_b = 1.0 - rec.mu_a;
    batch.push_back(std::move(rec));
  }
  const fprl::welfare::GiniWeights w = fprl::welfare::default_gini_weights(k);

  fprl::pref::LossResult serial_loss, parallel_loss;
  const double t_loss_serial = best_of(
      repeats, [&] { serial_loss = fprl::pref::preference_loss_serial(model, batch, w, 0.99); });
  const double t_loss_parallel = best_of(
      repeats, [&] { parallel_loss = fprl::pref::preference_loss(model, batch, w, 0.99); });
  const bool loss_match = serial_loss.loss == parallel_loss.loss &&
                          serial_loss.gradient == parallel_loss.gradient;

  std::printf("%-16s %5d trajectories  serial %8.3f s  parallel %8.3f s  speedup %.2fx\n",
              "evaluate", trajectories, t_eval_serial, t_eval_parallel,
              t_eval_serial / t_eval_parallel);
  std::printf("%-16s %5d pairs x %-3d   serial %8.3f s  parallel %8.3f s  speedup %.2fx\n",
              "preference_loss", pairs, segment_len, t_loss_serial, t_loss_parallel,
              t_loss_serial / t_loss_parallel);
  std::printf("bitwise parity: evaluate %s, preference_loss %s\n",
              eval_match ? "ok" : "MISMATCH", loss_match ? "ok" : "MISMATCH");
  return (eval_match && loss_match) ? 0 : 1;
}
