// End-to-end checks of the command-line binary: exit codes, produced files
// and rerun determinism. The binary path is baked in at build time.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const fs::path g_scratch = fs::temp_directory_path() / "fprl_test_cli";

struct CommandResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CommandResult run_cli(const std::string& args) {
  fs::create_directories(g_scratch);
  const fs::path out_file = g_scratch / "stdout.txt";
  const fs::path err_file = g_scratch / "stderr.txt";
  const std::string cmd = std::string(FPRL_CLI_PATH) + " " + args + " > " +
                          out_file.string() + " 2> " + err_file.string();
  const int status = std::system(cmd.c_str());
  CommandResult res;
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  for (const auto* pair : {&out_file, &err_file}) {
    std::ifstream in(*pair);
    std::stringstream ss;
    ss << in.rdbuf();
    (pair == &out_file ? res.out : res.err) = ss.str();
  }
  return res;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small fixed training command so several tests can share its output.
const std::string kTinyTrain =
    "train --env bandit --variant ppo_ground_truth --seed 4 --steps 256 "
    "--set agent.rollout_steps=128";

}  // namespace

TEST_CASE("help exits cleanly") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("train --help").exit_code == 0);
}

TEST_CASE("usage mistakes exit with code 2") {
  CHECK(run_cli("").exit_code == 2);               // missing subcommand
  CHECK(run_cli("launch").exit_code == 2);         // unknown subcommand
  CHECK(run_cli("eval").exit_code == 2);           // missing required option
}

TEST_CASE("unknown config keys are named and exit with code 2") {
  const CommandResult res = run_cli("train --set agent.gama=0.5");
  CHECK(res.exit_code == 2);
  CHECK(res.err.find("agent.gama") != std::string::npos);
}

TEST_CASE("invalid variant and environment names exit with code 2") {
  CHECK(run_cli("train --variant dqn --env bandit --steps 64").exit_code == 2);
  CHECK(run_cli("train --variant fpbrl --env pong --steps 64").exit_code == 2);
}

TEST_CASE("training writes the run directory layout") {
  fs::remove_all(g_scratch / "runs");
  const CommandResult res =
      run_cli(kTinyTrain + " -o " + (g_scratch / "runs").string());
  CHECK(res.exit_code == 0);
  const fs::path dir = g_scratch / "runs" / "bandit" / "ppo_ground_truth" / "seed4";
  for (const std::string f : {"config_used.cfg", "metrics.csv", "policy.ckpt", "critic.ckpt"})
    CHECK(fs::exists(dir / f));
  // ground truth variant collects no preferences, so no reward artifacts
  CHECK_FALSE(fs::exists(dir / "reward.ckpt"));
  CHECK_FALSE(fs::exists(dir / "preferences.csv"));
}

TEST_CASE("a rerun reproduces the outputs byte for byte") {
  fs::remove_all(g_scratch / "runs_a");
  fs::remove_all(g_scratch / "runs_b");
  REQUIRE(run_cli(kTinyTrain + " -o " + (g_scratch / "runs_a").string()).exit_code == 0);
  REQUIRE(run_cli(kTinyTrain + " -o " + (g_scratch / "runs_b").string()).exit_code == 0);
  const fs::path rel = fs::path("bandit") / "ppo_ground_truth" / "seed4";
  for (const std::string f : {"config_used.cfg", "metrics.csv", "policy.ckpt", "critic.ckpt"})
    CHECK(file_bytes(g_scratch / "runs_a" / rel / f) ==
          file_bytes(g_scratch / "runs_b" / rel / f));
}

TEST_CASE("FPRL_OUT supplies the output root when no flag is given") {
  const fs::path root = g_scratch / "env_root";
  fs::remove_all(root);
  setenv("FPRL_OUT", root.c_str(), 1);
  const CommandResult res = run_cli(kTinyTrain);
  unsetenv("FPRL_OUT");
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(root / "bandit" / "ppo_ground_truth" / "seed4" / "policy.ckpt"));
}

TEST_CASE("evaluation consumes a checkpoint and writes a report") {
  const fs::path dir = g_scratch / "runs" / "bandit" / "ppo_ground_truth" / "seed4";
  if (!fs::exists(dir / "policy.ckpt"))
    REQUIRE(run_cli(kTinyTrain + " -o " + (g_scratch / "runs").string()).exit_code == 0);

  const CommandResult res = run_cli("eval --checkpoint " +
                                    (dir / "policy.ckpt").string() +
                                    " --trajectories 10");
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(dir / "eval_report.csv"));
  CHECK(fs::exists(dir / "eval_trajectories.csv"));

  SUBCASE("missing checkpoint") {
    CHECK(run_cli("eval --checkpoint /no/such/file.ckpt").exit_code == 2);
  }
  SUBCASE("wrong network role") {
    CHECK(run_cli("eval --checkpoint " + (dir / "critic.ckpt").string()).exit_code == 2);
  }
  SUBCASE("checkpoint does not fit the requested environment") {
    CHECK(run_cli("eval --checkpoint " + (dir / "policy.ckpt").string() +
                  " --set env=species")
              .exit_code == 2);
  }
}

TEST_CASE("compare aggregates run directories") {
  // two runs differing only in seed, both evaluated in place
  const fs::path root = g_scratch / "cmp_runs";
  fs::remove_all(root);
  for (const std::string seed : {"4", "5"}) {
    REQUIRE(run_cli("train --env bandit --variant ppo_ground_truth --seed " + seed +
                    " --steps 256 --set agent.rollout_steps=128 -o " + root.string())
                .exit_code == 0);
    REQUIRE(run_cli("eval --checkpoint " +
                    (root / "bandit" / "ppo_ground_truth" / ("seed" + seed) /
                     "policy.ckpt")
                        .string() +
                    " --trajectories 10")
                .exit_code == 0);
  }
  const fs::path a = root / "bandit" / "ppo_ground_truth" / "seed4";
  const fs::path b = root / "bandit" / "ppo_ground_truth" / "seed5";
  const fs::path cmp = g_scratch / "comparison.csv";
  const fs::path plot = g_scratch / "plot.csv";
  const CommandResult res = run_cli("compare " + a.string() + " " + b.string() +
                                    " -o " + cmp.string() + " --plot-data " +
                                    plot.string());
  CHECK(res.exit_code == 0);
  REQUIRE(fs::exists(cmp));
  std::ifstream in(cmp);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 2);  // header + one aggregated variant row
  CHECK(fs::exists(plot));

  SUBCASE("directories without a report are refused") {
    CHECK(run_cli("compare " + (g_scratch / "nope").string()).exit_code == 2);
  }
}
