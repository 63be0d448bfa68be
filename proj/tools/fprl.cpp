// Command-line front end: train a variant, evaluate a frozen checkpoint,
// or aggregate evaluation reports across runs.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fprl/agent.hpp"
#include "fprl/config.hpp"
#include "fprl/envs.hpp"
#include "fprl/evalharness.hpp"
#include "fprl/mlp.hpp"
#include "fprl/util.hpp"

namespace fs = std::filesystem;
using fprl::config::ConfigError;
using fprl::config::RunConfig;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "Config file (key = value lines)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", opts.overrides,
                  "Override a config key, e.g. --set agent.gamma=0.98 (repeatable, "
                  "applied last)");
}

// --out beats FPRL_OUT beats the config value (whose default is "runs").
fs::path resolve_out_root(const std::string& out_flag, const RunConfig& cfg) {
  if (!out_flag.empty()) return out_flag;
  if (const char* env_out = std::getenv("FPRL_OUT"); env_out != nullptr && *env_out)
    return env_out;
  return cfg.get_string("out");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair preference-based reinforcement learning runner"};
  app.require_subcommand(1);

  CommonOpts train_common;
  std::string train_out, train_variant, train_env, train_seed, train_steps;
  CLI::App* train_cmd = app.add_subcommand("train", "Train one variant on one environment");
  add_common(train_cmd, train_common);
  train_cmd->add_option("--variant", train_variant,
                        "ppo_ground_truth, pbrl_scalar or fpbrl");
  train_cmd->add_option("--env", train_env, "Environment name");
  train_cmd->add_option("--seed", train_seed, "Master seed");
  train_cmd->add_option("--steps", train_steps, "Total environment steps");
  train_cmd->add_option("-o,--out", train_out,
                        "Output root (default: $FPRL_OUT, then config key 'out')");

  CommonOpts eval_common;
  std::string eval_checkpoint, eval_out, eval_trajectories;
  bool eval_greedy = false;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Evaluate a frozen policy checkpoint");
  add_common(eval_cmd, eval_common);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Path to policy.ckpt")
      ->required();
  eval_cmd->add_option("--trajectories", eval_trajectories,
                       "Evaluation episodes (default: config key eval.trajectories)");
  eval_cmd->add_flag("--greedy", eval_greedy, "Argmax actions instead of sampling");
  eval_cmd->add_option("-o,--out", eval_out,
                       "Directory for eval_report.csv (default: checkpoint directory)");

  std::vector<std::string> compare_dirs;
  std::string compare_out = "comparison.csv", compare_plot;
  CLI::App* compare_cmd =
      app.add_subcommand("compare", "Aggregate eval reports from several run directories");
  compare_cmd->add_option("dirs", compare_dirs, "Run directories containing eval_report.csv")
      ->required();
  compare_cmd->add_option("-o,--out", compare_out, "Comparison CSV path");
  compare_cmd->add_option("--plot-data", compare_plot,
                          "Also write long-format per-seed metric rows here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*train_cmd) {
      RunConfig cfg = [&] {
        RunConfig base = train_common.config_path.empty()
                             ? RunConfig()
                             : RunConfig::from_file(train_common.config_path);
        if (!train_variant.empty()) base.set("variant", train_variant);
        if (!train_env.empty()) base.set("env", train_env);
        if (!train_seed.empty()) base.set("seed", train_seed);
        if (!train_steps.empty()) base.set("total_steps", train_steps);
        for (const std::string& assignment : train_common.overrides)
          base.apply_override(assignment);
        return base;
      }();
      // Fail fast on bad names before any directory is created.
      (void)fprl::agent::parse_variant(cfg.get_string("variant"));
      (void)fprl::envs::make_env(cfg.get_string("env"), cfg, 0);

      const fs::path run_dir = resolve_out_root(train_out, cfg) /
                               cfg.get_string("env") / cfg.get_string("variant") /
                               ("seed" + std::to_string(cfg.get_u64("seed")));
      std::cout << "training " << cfg.get_string("variant") << " on "
                << cfg.get_string("env") << " (seed " << cfg.get_u64("seed") << ") -> "
                << run_dir.string() << "\n";
      const fprl::agent::TrainSummary summary = fprl::agent::train(cfg, run_dir);
      std::cout << "done: " << summary.env_steps << " env steps, "
                << summary.iterations << " iterations, " << summary.preference_count
                << " preference pairs\n"
                << "policy checkpoint: " << summary.policy_checkpoint.string() << "\n";
      return 0;
    }

    if (*eval_cmd) {
      const fs::path ckpt_path = eval_checkpoint;
      if (!fs::exists(ckpt_path)) {
        std::cerr << "error: checkpoint not found: " << ckpt_path.string() << "\n";
        return kExitUsage;
      }
      RunConfig cfg = [&] {
        if (!eval_common.config_path.empty())
          return RunConfig::from_file(eval_common.config_path);
        const fs::path sibling = ckpt_path.parent_path() / "config_used.cfg";
        return fs::exists(sibling) ? RunConfig::from_file(sibling) : RunConfig();
      }();
      for (const std::string& assignment : eval_common.overrides)
        cfg.apply_override(assignment);
      if (!eval_trajectories.empty()) cfg.set("eval.trajectories", eval_trajectories);
      if (eval_greedy) cfg.set("eval.greedy", "true");

      const fprl::net::LoadedCheckpoint loaded = fprl::net::load_checkpoint(ckpt_path);
      if (loaded.role != "policy") {
        std::cerr << "error: " << ckpt_path.string() << " holds a '" << loaded.role
                  << "' network, expected 'policy'\n";
        return kExitUsage;
      }
      const std::string env_name = cfg.get_string("env");
      {
        const std::unique_ptr<fprl::envs::Env> probe =
            fprl::envs::make_env(env_name, cfg, 0);
        if (loaded.net.input_width() != probe->spec().observation_width ||
            loaded.net.output_width() != probe->spec().action_count) {
          std::cerr << "error: checkpoint dimensions (" << loaded.net.input_width()
                    << " -> " << loaded.net.output_width() << ") do not match env '"
                    << env_name << "' (" << probe->spec().observation_width << " -> "
                    << probe->spec().action_count << ")\n";
          return kExitUsage;
        }
      }

      const fprl::eval::EvalReport report = fprl::eval::evaluate(
          loaded.net, env_name, cfg, cfg.get_string("variant"), cfg.get_u64("seed"),
          cfg.get_int("eval.trajectories"), cfg.get_bool("eval.greedy"));

      const fs::path out_dir = eval_out.empty() ? ckpt_path.parent_path() : fs::path(eval_out);
      fs::create_directories(out_dir);
      fprl::eval::write_report_csv(out_dir / "eval_report.csv", report);
      fprl::eval::write_trajectories_csv(out_dir / "eval_trajectories.csv", report);

      std::cout << report.variant << " on " << report.env << ": welfare "
                << fprl::format_double(report.welfare_score) << ", cv "
                << fprl::format_double(report.cv) << ", min "
                << fprl::format_double(report.min_util) << ", max "
                << fprl::format_double(report.max_util) << " over "
                << report.trajectories << " trajectories\n"
                << "report: " << (out_dir / "eval_report.csv").string() << "\n";
      return 0;
    }

    if (*compare_cmd) {
      std::vector<fprl::eval::EvalReport> reports;
      for (const std::string& dir : compare_dirs) {
        const fs::path report_path = fs::path(dir) / "eval_report.csv";
        if (!fs::exists(report_path)) {
          std::cerr << "error: no eval_report.csv in " << dir << "\n";
          return kExitUsage;
        }
        reports.push_back(fprl::eval::load_report_csv(report_path));
      }
      const std::vector<fprl::eval::ComparisonRow> rows =
          fprl::eval::aggregate(reports);
      fprl::eval::write_comparison_csv(compare_out, rows);
      if (!compare_plot.empty()) fprl::eval::write_plot_data_csv(compare_plot, reports);

      for (const fprl::eval::ComparisonRow& row : rows)
        std::cout << row.variant << " (" << row.seeds << " seeds): welfare "
                  << fprl::format_double(row.welfare_mean) << " +/- "
                  << fprl::format_double(row.welfare_std) << ", cv "
                  << fprl::format_double(row.cv_mean) << ", min "
                  << fprl::format_double(row.min_util_mean) << ", max "
                  << fprl::format_double(row.max_util_mean) << "\n";
      std::cout << "comparison: " << compare_out << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
