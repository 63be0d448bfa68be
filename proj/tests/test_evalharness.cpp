#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <omp.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fprl/config.hpp"
#include "fprl/evalharness.hpp"
#include "fprl/mlp.hpp"
#include "fprl/rng.hpp"
#include "fprl/welfare.hpp"

using namespace fprl;
using config::RunConfig;
using eval::EvalReport;
using net::Mlp;
using welfare::UtilityVector;

namespace {

Mlp species_policy(std::uint64_t seed) {
  Rng rng(seed);
  return Mlp::glorot({2, 8, 5}, net::Hidden::Tanh, net::Output::Linear, rng);
}

EvalReport hand_report(std::string variant, std::uint64_t seed, double welfare,
                       UtilityVector means) {
  EvalReport r;
  r.variant = std::move(variant);
  r.env = "species";
  r.seed = seed;
  r.trajectories = 4;
  r.mean_return = std::move(means);
  r.welfare_score = welfare;
  r.cv = 0.1;
  r.min_util = 0.0;
  r.max_util = 1.0;
  return r;
}

}  // namespace

TEST_CASE("evaluation report is self consistent") {
  const RunConfig cfg;
  const Mlp policy = species_policy(61);
  const EvalReport report =
      eval::evaluate_serial(policy, "species", cfg, "fpbrl", 5, 20, false);

  CHECK(report.variant == "fpbrl");
  CHECK(report.env == "species");
  CHECK(report.seed == 5);
  CHECK(report.trajectories == 20);
  REQUIRE(report.returns.size() == 20);

  UtilityVector mean(2, 0.0);
  for (const UtilityVector& r : report.returns) {
    REQUIRE(r.size() == 2);
    for (std::size_t j = 0; j < 2; ++j) mean[j] += r[j];
  }
  for (double& x : mean) x /= 20.0;
  CHECK(report.mean_return == mean);
  CHECK(report.welfare_score ==
        welfare::gini_welfare(mean, welfare::default_gini_weights(2)));
  CHECK(report.min_util == std::min(mean[0], mean[1]));
  CHECK(report.max_util == std::max(mean[0], mean[1]));
}

TEST_CASE("parallel evaluation is bitwise the serial one") {
  const RunConfig cfg;
  const Mlp policy = species_policy(62);
  omp_set_num_threads(2);
  const EvalReport par = eval::evaluate(policy, "species", cfg, "fpbrl", 9, 24, false);
  const EvalReport ser =
      eval::evaluate_serial(policy, "species", cfg, "fpbrl", 9, 24, false);
  CHECK(par.returns == ser.returns);
  CHECK(par.mean_return == ser.mean_return);
  CHECK(par.welfare_score == ser.welfare_score);
  CHECK(par.cv == ser.cv);
}

TEST_CASE("greedy and sampled evaluation can differ but share the episode set") {
  const RunConfig cfg;
  const Mlp policy = species_policy(63);
  const EvalReport a = eval::evaluate_serial(policy, "species", cfg, "x", 1, 10, false);
  const EvalReport b = eval::evaluate_serial(policy, "species", cfg, "x", 1, 10, false);
  CHECK(a.returns == b.returns);  // same seed, same everything
}

TEST_CASE("mismatched policy dimensions are rejected") {
  const RunConfig cfg;
  Rng rng(64);
  const Mlp wrong = Mlp::glorot({3, 4, 5}, net::Hidden::Tanh, net::Output::Linear, rng);
  CHECK_THROWS_AS(eval::evaluate_serial(wrong, "species", cfg, "x", 1, 4, false),
                  std::invalid_argument);
  const Mlp ok = species_policy(65);
  CHECK_THROWS_AS(eval::evaluate_serial(ok, "species", cfg, "x", 1, 0, false),
                  std::invalid_argument);
}

TEST_CASE("an all-zero objective leaves the coefficient of variation undefined") {
  RunConfig cfg;
  cfg.set("env.bandit.arm0", "0.0");
  cfg.set("env.bandit.arm1", "0.0");
  Rng rng(66);
  const Mlp policy = Mlp::glorot({1, 4, 2}, net::Hidden::Tanh, net::Output::Linear, rng);
  const EvalReport report = eval::evaluate_serial(policy, "bandit", cfg, "x", 1, 5, false);
  CHECK(std::isnan(report.cv));
  CHECK(report.welfare_score == 0.0);
}

TEST_CASE("report CSV round trips") {
  const RunConfig cfg;
  const Mlp policy = species_policy(67);
  const EvalReport report =
      eval::evaluate_serial(policy, "species", cfg, "pbrl_scalar", 13, 8, true);
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "fprl_test_report.csv";
  eval::write_report_csv(path, report);
  const EvalReport loaded = eval::load_report_csv(path);
  CHECK(loaded.variant == report.variant);
  CHECK(loaded.env == report.env);
  CHECK(loaded.seed == report.seed);
  CHECK(loaded.trajectories == report.trajectories);
  CHECK(loaded.welfare_score == report.welfare_score);
  CHECK(loaded.cv == report.cv);
  CHECK(loaded.min_util == report.min_util);
  CHECK(loaded.max_util == report.max_util);
  CHECK(loaded.mean_return == report.mean_return);
  std::filesystem::remove(path);
}

TEST_CASE("trajectory CSV has one row per episode") {
  const RunConfig cfg;
  const Mlp policy = species_policy(68);
  const EvalReport report = eval::evaluate_serial(policy, "species", cfg, "x", 2, 6, false);
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "fprl_test_trajs.csv";
  eval::write_trajectories_csv(path, report);
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 7);  // header + 6 episodes
  std::filesystem::remove(path);
}

TEST_CASE("aggregation averages per variant with population spread") {
  std::vector<EvalReport> reports;
  reports.push_back(hand_report("fpbrl", 0, 2.0, {1.0, 2.0}));
  reports.push_back(hand_report("fpbrl", 1, 4.0, {3.0, 4.0}));
  reports.push_back(hand_report("ppo_ground_truth", 0, 10.0, {5.0, 6.0}));

  const std::vector<eval::ComparisonRow> rows = eval::aggregate(reports);
  REQUIRE(rows.size() == 2);
  // canonical ordering puts the ground-truth baseline first
  CHECK(rows[0].variant == "ppo_ground_truth");
  CHECK(rows[1].variant == "fpbrl");
  CHECK(rows[1].seeds == 2);
  CHECK(rows[1].welfare_mean == 3.0);
  CHECK(rows[1].welfare_std == 1.0);  // population std of {2, 4}
  CHECK(rows[1].obj_mean == std::vector<double>{2.0, 3.0});
  CHECK(rows[1].obj_std == std::vector<double>{1.0, 1.0});

  // input order must not matter
  std::swap(reports[0], reports[2]);
  const std::vector<eval::ComparisonRow> again = eval::aggregate(reports);
  CHECK(again[1].welfare_mean == rows[1].welfare_mean);
  CHECK(again[0].variant == rows[0].variant);
}

TEST_CASE("aggregation refuses mixed environments") {
  std::vector<EvalReport> reports;
  reports.push_back(hand_report("fpbrl", 0, 2.0, {1.0, 2.0}));
  EvalReport other = hand_report("fpbrl", 1, 3.0, {1.0, 2.0});
  other.env = "traffic";
  reports.push_back(other);
  CHECK_THROWS_AS(eval::aggregate(reports), std::invalid_argument);
  CHECK_THROWS_AS(eval::aggregate({}), std::invalid_argument);
}

TEST_CASE("comparison and plot CSVs carry every variant and metric") {
  std::vector<EvalReport> reports;
  reports.push_back(hand_report("fpbrl", 0, 2.0, {1.0, 2.0}));
  reports.push_back(hand_report("pbrl_scalar", 0, 3.0, {2.0, 3.0}));

  const std::filesystem::path cmp =
      std::filesystem::temp_directory_path() / "fprl_test_cmp.csv";
  const std::filesystem::path plot =
      std::filesystem::temp_directory_path() / "fprl_test_plot.csv";
  eval::write_comparison_csv(cmp, eval::aggregate(reports));
  eval::write_plot_data_csv(plot, reports);

  std::ifstream in(cmp);
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "variant,env,seeds,welfare_mean,welfare_std,cv_mean,cv_std,min_util_mean,"
        "min_util_std,max_util_mean,max_util_std,obj_1_mean,obj_1_std,obj_2_mean,"
        "obj_2_std");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2);

  std::ifstream pin(plot);
  int plot_lines = 0;
  while (std::getline(pin, line)) ++plot_lines;
  // header + 2 reports x (welfare, cv, min, max, obj_1, obj_2)
  CHECK(plot_lines == 1 + 2 * 6);
  std::filesystem::remove(cmp);
  std::filesystem::remove(plot);
}
