#include "fprl/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fprl/envs.hpp"
#include "fprl/policy.hpp"
#include "fprl/rng.hpp"
#include "fprl/util.hpp"

namespace fprl::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

welfare::UtilityVector run_trajectory(const net::Mlp& policy, const std::string& env_name,
                                      const config::RunConfig& cfg,
                                      std::uint64_t env_seed, std::uint64_t action_seed,
                                      bool greedy) {
  std::unique_ptr<envs::Env> env = envs::make_env(env_name, cfg, env_seed);
  Rng action_rng(action_seed);
  std::vector<double> obs = env->reset();
  welfare::UtilityVector ret(static_cast<std::size_t>(env->spec().objective_count), 0.0);
  bool done = false;
  while (!done) {
    const int a = greedy ? policy::greedy_action(policy, obs)
                         : policy::sample_action(policy, obs, action_rng);
    envs::Transition tr = env->step(a);
    for (std::size_t j = 0; j < ret.size(); ++j) ret[j] += tr.reward[j];
    done = tr.terminal;
    obs = std::move(tr.next_observation);
  }
  return ret;
}

EvalReport finalize(std::string variant, std::string env_name, std::uint64_t seed,
                    std::vector<welfare::UtilityVector> slots) {
  EvalReport report;
  report.variant = std::move(variant);
  report.env = std::move(env_name);
  report.seed = seed;
  report.trajectories = static_cast<int>(slots.size());
  report.returns = std::move(slots);

  const std::size_t k = report.returns.front().size();
  report.mean_return.assign(k, 0.0);
  for (const welfare::UtilityVector& r : report.returns)
    for (std::size_t j = 0; j < k; ++j) report.mean_return[j] += r[j];
  for (double& x : report.mean_return) x /= static_cast<double>(report.trajectories);

  const welfare::GiniWeights w = welfare::default_gini_weights(static_cast<int>(k));
  report.welfare_score = welfare::gini_welfare(report.mean_return, w);
  try {
    report.cv = welfare::coefficient_of_variation(report.mean_return);
  } catch (const std::domain_error&) {
    report.cv = kNaN;
  }
  const auto [lo, hi] = welfare::min_max_utilities(report.mean_return);
  report.min_util = lo;
  report.max_util = hi;
  return report;
}

void check_args(const net::Mlp& policy, const std::string& env_name,
                const config::RunConfig& cfg, int trajectories) {
  if (trajectories < 1)
    throw std::invalid_argument("evaluate: trajectories must be >= 1");
  const std::unique_ptr<envs::Env> probe = envs::make_env(env_name, cfg, 0);
  const envs::EnvSpec& spec = probe->spec();
  if (policy.input_width() != spec.observation_width ||
      policy.output_width() != spec.action_count)
    throw std::invalid_argument(
        "evaluate: policy dimensions do not match environment '" + env_name + "'");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int variant_rank(const std::string& v) {
  if (v == "ppo_ground_truth") return 0;
  if (v == "pbrl_scalar") return 1;
  if (v == "fpbrl") return 2;
  return 3;
}

// Population mean/std of one scalar metric over a span of reports.
template <typename Get>
std::pair<double, double> mean_std(std::span<const EvalReport> group, Get get) {
  const double n = static_cast<double>(group.size());
  double mean = 0.0;
  for (const EvalReport& r : group) mean += get(r);
  mean /= n;
  double var = 0.0;
  for (const EvalReport& r : group) {
    const double d = get(r) - mean;
    var += d * d;
  }
  return {mean, std::sqrt(var / n)};
}

}  // namespace

EvalReport evaluate(const net::Mlp& policy, const std::string& env_name,
                    const config::RunConfig& cfg, const std::string& variant,
                    std::uint64_t seed, int trajectories, bool greedy) {
  check_args(policy, env_name, cfg, trajectories);
  const std::uint64_t env_root = derive_seed(seed, stream::eval_env);
  const std::uint64_t action_root = derive_seed(seed, stream::eval_action);

  std::vector<welfare::UtilityVector> slots(static_cast<std::size_t>(trajectories));
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < trajectories; ++i) {
    try {
      slots[static_cast<std::size_t>(i)] = run_trajectory(
          policy, env_name, cfg, derive_seed(env_root, static_cast<std::uint64_t>(i)),
          derive_seed(action_root, static_cast<std::uint64_t>(i)), greedy);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return finalize(variant, env_name, seed, std::move(slots));
}

EvalReport evaluate_serial(const net::Mlp& policy, const std::string& env_name,
                           const config::RunConfig& cfg, const std::string& variant,
                           std::uint64_t seed, int trajectories, bool greedy) {
  check_args(policy, env_name, cfg, trajectories);
  const std::uint64_t env_root = derive_seed(seed, stream::eval_env);
  const std::uint64_t action_root = derive_seed(seed, stream::eval_action);

  std::vector<welfare::UtilityVector> slots(static_cast<std::size_t>(trajectories));
  for (int i = 0; i < trajectories; ++i)
    slots[static_cast<std::size_t>(i)] = run_trajectory(
        policy, env_name, cfg, derive_seed(env_root, static_cast<std::uint64_t>(i)),
        derive_seed(action_root, static_cast<std::uint64_t>(i)), greedy);
  return finalize(variant, env_name, seed, std::move(slots));
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_report_csv: cannot open " + path.string());
  out << "variant,env,seed,trajectories,welfare,cv,min_util,max_util";
  for (std::size_t j = 1; j <= report.mean_return.size(); ++j) out << ",obj_" << j;
  out << '\n';
  out << report.variant << ',' << report.env << ',' << report.seed << ','
      << report.trajectories << ',' << format_double(report.welfare_score) << ','
      << format_double(report.cv) << ',' << format_double(report.min_util) << ','
      << format_double(report.max_util);
  for (const double x : report.mean_return) out << ',' << format_double(x);
  out << '\n';
}

EvalReport load_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_report_csv: cannot open " + path.string());
  std::string header, row;
  if (!std::getline(in, header) || !std::getline(in, row))
    throw std::runtime_error("load_report_csv: truncated file " + path.string());

  const std::vector<std::string> names = split_csv_line(header);
  const std::vector<std::string> fields = split_csv_line(row);
  if (names.size() < 9 || fields.size() != names.size() ||
      names[0] != "variant" || names[4] != "welfare" || names[8] != "obj_1")
    throw std::runtime_error("load_report_csv: unexpected layout in " + path.string());

  EvalReport report;
  report.variant = fields[0];
  report.env = fields[1];
  report.seed = std::stoull(fields[2]);
  report.trajectories = std::stoi(fields[3]);
  report.welfare_score = std::stod(fields[4]);
  report.cv = std::stod(fields[5]);
  report.min_util = std::stod(fields[6]);
  report.max_util = std::stod(fields[7]);
  for (std::size_t j = 8; j < fields.size(); ++j)
    report.mean_return.push_back(std::stod(fields[j]));
  return report;
}

void write_trajectories_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("write_trajectories_csv: cannot open " + path.string());
  out << "trajectory";
  for (std::size_t j = 1; j <= report.mean_return.size(); ++j) out << ",ret_" << j;
  out << '\n';
  for (std::size_t i = 0; i < report.returns.size(); ++i) {
    out << i;
    for (const double x : report.returns[i]) out << ',' << format_double(x);
    out << '\n';
  }
}

std::vector<ComparisonRow> aggregate(std::vector<EvalReport> reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate: no reports");
  const std::string& env = reports.front().env;
  const std::size_t k = reports.front().mean_return.size();
  for (const EvalReport& r : reports) {
    if (r.env != env)
      throw std::invalid_argument("aggregate: reports mix environments '" + env +
                                  "' and '" + r.env + "'");
    if (r.mean_return.size() != k)
      throw std::invalid_argument("aggregate: objective count mismatch");
  }

  std::sort(reports.begin(), reports.end(), [](const EvalReport& a, const EvalReport& b) {
    const int ra = variant_rank(a.variant), rb = variant_rank(b.variant);
    if (ra != rb) return ra < rb;
    if (a.variant != b.variant) return a.variant < b.variant;
    return a.seed < b.seed;
  });

  std::vector<ComparisonRow> rows;
  std::size_t start = 0;
  while (start < reports.size()) {
    std::size_t stop = start;
    while (stop < reports.size() && reports[stop].variant == reports[start].variant)
      ++stop;
    const std::span<const EvalReport> group(reports.data() + start, stop - start);

    ComparisonRow row;
    row.variant = reports[start].variant;
    row.env = env;
    row.seeds = static_cast<int>(group.size());
    std::tie(row.welfare_mean, row.welfare_std) =
        mean_std(group, [](const EvalReport& r) { return r.welfare_score; });
    std::tie(row.cv_mean, row.cv_std) =
        mean_std(group, [](const EvalReport& r) { return r.cv; });
    std::tie(row.min_util_mean, row.min_util_std) =
        mean_std(group, [](const EvalReport& r) { return r.min_util; });
    std::tie(row.max_util_mean, row.max_util_std) =
        mean_std(group, [](const EvalReport& r) { return r.max_util; });
    for (std::size_t j = 0; j < k; ++j) {
      const auto [m, s] =
          mean_std(group, [j](const EvalReport& r) { return r.mean_return[j]; });
      row.obj_mean.push_back(m);
      row.obj_std.push_back(s);
    }
    rows.push_back(std::move(row));
    start = stop;
  }
  return rows;
}

void write_comparison_csv(const std::filesystem::path& path,
                          std::span<const ComparisonRow> rows) {
  if (rows.empty()) throw std::invalid_argument("write_comparison_csv: no rows");
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("write_comparison_csv: cannot open " + path.string());
  out << "variant,env,seeds,welfare_mean,welfare_std,cv_mean,cv_std,"
         "min_util_mean,min_util_std,max_util_mean,max_util_std";
  for (std::size_t j = 1; j <= rows.front().obj_mean.size(); ++j)
    out << ",obj_" << j << "_mean,obj_" << j << "_std";
  out << '\n';
  for (const ComparisonRow& row : rows) {
    out << row.variant << ',' << row.env << ',' << row.seeds << ','
        << format_double(row.welfare_mean) << ',' << format_double(row.welfare_std) << ','
        << format_double(row.cv_mean) << ',' << format_double(row.cv_std) << ','
        << format_double(row.min_util_mean) << ',' << format_double(row.min_util_std)
        << ',' << format_double(row.max_util_mean) << ','
        << format_double(row.max_util_std);
    for (std::size_t j = 0; j < row.obj_mean.size(); ++j)
      out << ',' << format_double(row.obj_mean[j]) << ',' << format_double(row.obj_std[j]);
    out << '\n';
  }
}

void write_plot_data_csv(const std::filesystem::path& path,
                         std::span<const EvalReport> reports) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("write_plot_data_csv: cannot open " + path.string());
  out << "metric,variant,seed,value\n";
  const auto emit = [&out](const std::string& metric, const EvalReport& r, double v) {
    out << metric << ',' << r.variant << ',' << r.seed << ',' << format_double(v) << '\n';
  };
  for (const EvalReport& r : reports) {
    emit("welfare", r, r.welfare_score);
    emit("cv", r, r.cv);
    emit("min_util", r, r.min_util);
    emit("max_util", r, r.max_util);
    for (std::size_t j = 0; j < r.mean_return.size(); ++j)
      emit("obj_" + std::to_string(j + 1), r, r.mean_return[j]);
  }
}

}  // namespace fprl::eval
