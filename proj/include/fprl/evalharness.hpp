#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fprl/config.hpp"
#include "fprl/mlp.hpp"
#include "fprl/welfare.hpp"

namespace fprl::eval {

/// Outcome of rolling a frozen policy for a fixed number of evaluation
/// episodes. Utilities are the undiscounted per-objective episode returns
/// averaged over trajectories; welfare_score, cv, min_util and max_util are
/// computed on that mean vector. cv is NaN when the mean utility is zero.
struct EvalReport {
  std::string variant;
  std::string env;
  std::uint64_t seed = 0;
  int trajectories = 0;
  std::vector<welfare::UtilityVector> returns;  // per trajectory; empty after load
  welfare::UtilityVector mean_return;
  double welfare_score = 0.0;
  double cv = 0.0;
  double min_util = 0.0;
  double max_util = 0.0;
};

/// Rolls out `trajectories` independent evaluation episodes of the frozen
/// policy. Trajectory i draws its environment and action randomness from
/// streams derived from (seed, i), so the episode set is fixed regardless of
/// how many OpenMP threads execute the loop; per-trajectory returns are
/// reduced in index order afterwards. greedy = true takes the argmax action
/// instead of sampling.
EvalReport evaluate(const net::Mlp& policy, const std::string& env_name,
                    const config::RunConfig& cfg, const std::string& variant,
                    std::uint64_t seed, int trajectories, bool greedy);

/// Serial reference; bit-identical to evaluate.
EvalReport evaluate_serial(const net::Mlp& policy, const std::string& env_name,
                           const config::RunConfig& cfg, const std::string& variant,
                           std::uint64_t seed, int trajectories, bool greedy);

/// Single-row summary CSV: variant, env, seed, trajectories, welfare, cv,
/// min_util, max_util, then one obj_j column per objective.
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
EvalReport load_report_csv(const std::filesystem::path& path);

/// One row per trajectory with its per-objective return.
void write_trajectories_csv(const std::filesystem::path& path, const EvalReport& report);

/// Per-variant aggregate across seeds; std fields are population standard
/// deviations over the seed reports.
struct ComparisonRow {
  std::string variant;
  std::string env;
  int seeds = 0;
  double welfare_mean = 0.0, welfare_std = 0.0;
  double cv_mean = 0.0, cv_std = 0.0;
  double min_util_mean = 0.0, min_util_std = 0.0;
  double max_util_mean = 0.0, max_util_std = 0.0;
  std::vector<double> obj_mean, obj_std;
};

/// Groups reports by variant in canonical order (ppo_ground_truth,
/// pbrl_scalar, fpbrl, then anything else lexicographically) and averages
/// each metric over seeds. Throws if the reports span different
/// environments or objective counts.
std::vector<ComparisonRow> aggregate(std::vector<EvalReport> reports);

void write_comparison_csv(const std::filesystem::path& path,
                          std::span<const ComparisonRow> rows);

/// Long-format dump for plotting: one (metric, variant, seed, value) row per
/// scalar metric of every report.
void write_plot_data_csv(const std::filesystem::path& path,
                         std::span<const EvalReport> reports);

}  // namespace fprl::eval
