#include "fprl/preference.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fprl/policy.hpp"

namespace fprl::pref {

namespace {

constexpr const char* kDatasetHeader = "segment_a,segment_b,mu_a,mu_b";

double stable_sigmoid(double d) {
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

// -log sigmoid(d), accurate for large |d|.
double log_loss(double d) { return d >= 0.0 ? std::log1p(std::exp(-d)) : -d + std::log1p(std::exp(d)); }

double scalar_sum(const welfare::UtilityVector& u) {
  double s = 0.0;
  for (double x : u) s += x;
  return s;
}

void check_segment(const Segment& seg) {
  if (seg.steps.empty()) throw std::invalid_argument("preference: empty segment");
}

// Loss and parameter gradient of one record; the gradient is accumulated
// into `grad` (+=). Shared by the serial and the OpenMP batch paths.
double record_loss(const RewardModel& model, const PreferenceRecord& rec,
                   const welfare::GiniWeights& w, double gamma,
                   std::vector<double>* grad) {
  const Segment* segs[2] = {&rec.a, &rec.b};
  std::vector<std::vector<net::Mlp::Cache>> caches(2);
  std::vector<std::vector<double>> inputs[2];
  welfare::UtilityVector ret[2];
  const int k_out = model.objectives();

  for (int s = 0; s < 2; ++s) {
    check_segment(*segs[s]);
    ret[s].assign(static_cast<std::size_t>(k_out), 0.0);
    caches[static_cast<std::size_t>(s)].resize(segs[s]->steps.size());
    inputs[s].reserve(segs[s]->steps.size());
    double disc = 1.0;
    for (std::size_t t = 0; t < segs[s]->steps.size(); ++t) {
      const SegmentStep& st = segs[s]->steps[t];
      inputs[s].push_back(model.stack_input(st.observation, st.action));
      const std::vector<double> r = model.network().forward(
          inputs[s].back(), caches[static_cast<std::size_t>(s)][t]);
      for (int j = 0; j < k_out; ++j)
        ret[s][static_cast<std::size_t>(j)] += disc * r[static_cast<std::size_t>(j)];
      disc *= gamma;
    }
  }

  const double score_a = welfare::gini_welfare(ret[0], w);
  const double score_b = welfare::gini_welfare(ret[1], w);
  const double d = score_a - score_b;
  const double p = stable_sigmoid(d);
  // -(mu_a log P + mu_b log(1-P)) without ever forming log of a denormal
  const double loss = rec.mu_a * log_loss(d) + rec.mu_b * log_loss(-d);

  if (grad) {
    // dL/d(score_a) = P - mu_a; the welfare subgradient routes that onto the
    // per-objective returns, and each step contributes through its discount.
    const double dd = p - rec.mu_a;
    for (int s = 0; s < 2; ++s) {
      const std::vector<double> wsort = welfare::sorted_weights(ret[s], w);
      const double sign = s == 0 ? 1.0 : -1.0;
      double disc = 1.0;
      std::vector<double> out_grad(static_cast<std::size_t>(k_out));
      for (std::size_t t = 0; t < segs[s]->steps.size(); ++t) {
        for (int j = 0; j < k_out; ++j)
          out_grad[static_cast<std::size_t>(j)] =
              sign * dd * disc * wsort[static_cast<std::size_t>(j)];
        model.network().backward(caches[static_cast<std::size_t>(s)][t], out_grad, *grad);
        disc *= gamma;
      }
    }
  }
  return loss;
}

LossResult batch_loss(const RewardModel& model, std::span<const PreferenceRecord> batch,
                      const welfare::GiniWeights& w, double gamma, bool parallel) {
  if (batch.empty()) throw std::invalid_argument("preference_loss: empty batch");
  const std::size_t n = batch.size();
  const std::size_t np = model.network().param_count();

  std::vector<double> losses(n, 0.0);
  std::vector<std::vector<double>> grads(n);

  if (parallel) {
    bool failed = false;
    std::string error;
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(n); ++i) {
      try {
        grads[static_cast<std::size_t>(i)].assign(np, 0.0);
        losses[static_cast<std::size_t>(i)] =
            record_loss(model, batch[static_cast<std::size_t>(i)], w, gamma,
                        &grads[static_cast<std::size_t>(i)]);
      } catch (const std::exception& e) {
#pragma omp critical
        {
          failed = true;
          error = e.what();
        }
      }
    }
    if (failed) throw std::invalid_argument("preference_loss: " + error);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      grads[i].assign(np, 0.0);
      losses[i] = record_loss(model, batch[i], w, gamma, &grads[i]);
    }
  }

  // Index-ordered reduction: the result cannot depend on thread schedule.
  LossResult out;
  out.gradient.assign(np, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    out.loss += losses[i];
    for (std::size_t j = 0; j < np; ++j) out.gradient[j] += grads[i][j];
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.loss *= inv;
  for (double& g : out.gradient) g *= inv;
  return out;
}

// Cell layout: k;obs_w;reward_w; then k*obs_w observation values, k actions,
// k*reward_w reward values, in that order.
void write_segment_cell(std::ostream& out, const Segment& seg) {
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << ';' << buf;
  };
  out << seg.steps.size() << ';' << seg.steps.front().observation.size() << ';'
      << seg.steps.front().reward.size();
  for (const SegmentStep& st : seg.steps)
    for (double o : st.observation) put(o);
  for (const SegmentStep& st : seg.steps) out << ';' << st.action;
  for (const SegmentStep& st : seg.steps)
    for (double r : st.reward) put(r);
}

Segment parse_segment_cell(const std::string& cell) {
  std::vector<std::string> parts;
  std::stringstream ss(cell);
  std::string tok;
  while (std::getline(ss, tok, ';')) parts.push_back(tok);
  if (parts.size() < 3) throw std::runtime_error("dataset: truncated segment cell");

  const long k = std::stol(parts[0]);
  const long obs_w = std::stol(parts[1]);
  const long reward_w = std::stol(parts[2]);
  if (k <= 0 || obs_w <= 0 || reward_w <= 0)
    throw std::runtime_error("dataset: non-positive segment dimensions");
  if (parts.size() != static_cast<std::size_t>(3 + k * obs_w + k + k * reward_w))
    throw std::runtime_error("dataset: segment cell has wrong field count");

  Segment seg;
  seg.steps.resize(static_cast<std::size_t>(k));
  const std::size_t obs_start = 3;
  const std::size_t act_start = obs_start + static_cast<std::size_t>(k * obs_w);
  const std::size_t reward_start = act_start + static_cast<std::size_t>(k);
  for (long t = 0; t < k; ++t) {
    SegmentStep& st = seg.steps[static_cast<std::size_t>(t)];
    st.observation.resize(static_cast<std::size_t>(obs_w));
    for (long j = 0; j < obs_w; ++j)
      st.observation[static_cast<std::size_t>(j)] =
          std::stod(parts[obs_start + static_cast<std::size_t>(t * obs_w + j)]);
    st.action = std::stoi(parts[act_start + static_cast<std::size_t>(t)]);
    st.reward.resize(static_cast<std::size_t>(reward_w));
    for (long j = 0; j < reward_w; ++j)
      st.reward[static_cast<std::size_t>(j)] =
          std::stod(parts[reward_start + static_cast<std::size_t>(t * reward_w + j)]);
  }
  return seg;
}

}  // namespace

// ---------------------------------------------------------------------------
// RewardModel

RewardModel::RewardModel(int obs_width, int action_count, int objectives, Rng& init_rng)
    : net_(net::Mlp::glorot({obs_width + action_count, 64, 64, objectives},
                            net::Hidden::Tanh, net::Output::Tanh, init_rng)),
      obs_w_(obs_width),
      act_n_(action_count),
      mean_(static_cast<std::size_t>(objectives), 0.0),
      stddev_(static_cast<std::size_t>(objectives), 1.0) {
  if (obs_width < 1 || action_count < 1 || objectives < 1)
    throw std::invalid_argument("RewardModel: widths must be positive");
}

RewardModel::RewardModel(net::Mlp net, int obs_width, int action_count)
    : net_(std::move(net)),
      obs_w_(obs_width),
      act_n_(action_count),
      mean_(static_cast<std::size_t>(net_.output_width()), 0.0),
      stddev_(static_cast<std::size_t>(net_.output_width()), 1.0) {
  if (net_.input_width() != obs_width + action_count)
    throw std::invalid_argument("RewardModel: network input width mismatch");
}

std::vector<double> RewardModel::stack_input(std::span<const double> obs,
                                             int action) const {
  if (static_cast<int>(obs.size()) != obs_w_)
    throw std::invalid_argument("RewardModel: observation width mismatch");
  if (action < 0 || action >= act_n_)
    throw std::invalid_argument("RewardModel: action out of range");
  std::vector<double> x(static_cast<std::size_t>(obs_w_ + act_n_), 0.0);
  std::copy(obs.begin(), obs.end(), x.begin());
  x[static_cast<std::size_t>(obs_w_ + action)] = 1.0;
  return x;
}

welfare::UtilityVector RewardModel::raw(std::span<const double> obs, int action) const {
  return net_.forward(stack_input(obs, action));
}

welfare::UtilityVector RewardModel::standardized(std::span<const double> obs,
                                                 int action) const {
  welfare::UtilityVector r = raw(obs, action);
  // Center per objective but share one scale: dividing each head by its own
  // spread would blow a near-flat head up into unit-variance noise that
  // drowns the informative heads.
  double scale = 0.0;
  for (const double s : stddev_) scale += s;
  scale /= static_cast<double>(stddev_.size());
  for (std::size_t j = 0; j < r.size(); ++j) r[j] = (r[j] - mean_[j]) / scale;
  return r;
}

void RewardModel::record_input(std::span<const double> obs, int action) {
  std::vector<double> x = stack_input(obs, action);
  if (recent_.size() < kRingCapacity) {
    recent_.push_back(std::move(x));
  } else {
    recent_[next_slot_] = std::move(x);
    next_slot_ = (next_slot_ + 1) % kRingCapacity;
  }
}

void RewardModel::refresh_normalization() {
  if (recent_.empty()) return;
  const std::size_t k = static_cast<std::size_t>(net_.output_width());
  std::vector<double> sum(k, 0.0), sumsq(k, 0.0);
  for (const std::vector<double>& x : recent_) {
    const std::vector<double> y = net_.forward(x);
    for (std::size_t j = 0; j < k; ++j) {
      sum[j] += y[j];
      sumsq[j] += y[j] * y[j];
    }
  }
  const double n = static_cast<double>(recent_.size());
  for (std::size_t j = 0; j < k; ++j) {
    mean_[j] = sum[j] / n;
    const double var = std::max(0.0, sumsq[j] / n - mean_[j] * mean_[j]);
    stddev_[j] = std::sqrt(var) + 1e-8;  // floor keeps a constant head usable
  }
}

// ---------------------------------------------------------------------------
// ops

welfare::UtilityVector segment_return(const Segment& seg, double gamma,
                                      bool ground_truth, const RewardModel* model) {
  check_segment(seg);
  if (!ground_truth && model == nullptr)
    throw std::invalid_argument("segment_return: model required for learned returns");

  welfare::UtilityVector total;
  double disc = 1.0;
  for (const SegmentStep& st : seg.steps) {
    const welfare::UtilityVector r =
        ground_truth ? st.reward : model->raw(st.observation, st.action);
    if (total.empty()) total.assign(r.size(), 0.0);
    if (r.size() != total.size())
      throw std::invalid_argument("segment_return: inconsistent reward width");
    for (std::size_t j = 0; j < r.size(); ++j) total[j] += disc * r[j];
    disc *= gamma;
  }
  return total;
}

double welfare_preference_probability(const welfare::UtilityVector& return_a,
                                      const welfare::UtilityVector& return_b,
                                      const welfare::GiniWeights& w) {
  const double d = welfare::gini_welfare(return_a, w) - welfare::gini_welfare(return_b, w);
  return stable_sigmoid(d);
}

PreferenceRecord synthetic_oracle(Segment a, Segment b, OracleMode mode,
                                  const welfare::GiniWeights& w, double gamma,
                                  bool noisy, Rng* label_rng) {
  const welfare::UtilityVector ra = segment_return(a, gamma, true);
  const welfare::UtilityVector rb = segment_return(b, gamma, true);

  double score_a, score_b;
  if (mode == OracleMode::Welfare) {
    score_a = welfare::gini_welfare(ra, w);
    score_b = welfare::gini_welfare(rb, w);
  } else {
    score_a = scalar_sum(ra);
    score_b = scalar_sum(rb);
  }

  PreferenceRecord rec{std::move(a), std::move(b), 0.5, 0.5};
  if (noisy) {
    if (label_rng == nullptr)
      throw std::invalid_argument("synthetic_oracle: noisy labels need an RNG");
    const bool prefer_a = label_rng->bernoulli(stable_sigmoid(score_a - score_b));
    rec.mu_a = prefer_a ? 1.0 : 0.0;
  } else if (score_a > score_b) {
    rec.mu_a = 1.0;
  } else if (score_a < score_b) {
    rec.mu_a = 0.0;
  } else {
    rec.mu_b = 0.5;  // exact tie keeps (0.5, 0.5)
    return rec;
  }
  rec.mu_b = 1.0 - rec.mu_a;
  return rec;
}

LossResult preference_loss(const RewardModel& model,
                           std::span<const PreferenceRecord> batch,
                           const welfare::GiniWeights& w, double gamma) {
  return batch_loss(model, batch, w, gamma, true);
}

LossResult preference_loss_serial(const RewardModel& model,
                                  std::span<const PreferenceRecord> batch,
                                  const welfare::GiniWeights& w, double gamma) {
  return batch_loss(model, batch, w, gamma, false);
}

std::vector<double> train_reward_model(RewardModel& model,
                                       std::span<const PreferenceRecord> dataset,
                                       int epochs, int batch_size, net::Adam& opt,
                                       const welfare::GiniWeights& w, double gamma,
                                       Rng& shuffle_rng) {
  if (epochs < 0) throw std::invalid_argument("train_reward_model: negative epochs");
  if (batch_size < 1) throw std::invalid_argument("train_reward_model: batch size < 1");
  std::vector<double> trace;
  if (epochs == 0 || dataset.empty()) return trace;

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<PreferenceRecord> batch;
  for (int e = 0; e < epochs; ++e) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(dataset[order[i]]);
      LossResult res = preference_loss(model, batch, w, gamma);
      if (!std::isfinite(res.loss))
        throw TrainingDiverged("train_reward_model: non-finite loss", std::move(trace));
      opt.step(model.network().params(), res.gradient);
      epoch_loss += res.loss;
      ++batches;
    }
    trace.push_back(epoch_loss / static_cast<double>(batches));
  }
  model.refresh_normalization();
  return trace;
}

CollectResult collect_and_label(const net::Mlp& policy, envs::Env& env, int pairs,
                                int segment_len, OracleMode mode,
                                const welfare::GiniWeights& w, double gamma,
                                int episodes, bool noisy, Rng& oracle_rng) {
  if (pairs < 1) throw std::invalid_argument("collect_and_label: pairs must be >= 1");
  if (segment_len < 1) throw std::invalid_argument("collect_and_label: segment_len must be >= 1");
  if (episodes < 1) throw std::invalid_argument("collect_and_label: episodes must be >= 1");
  if (segment_len > env.spec().max_episode_length)
    throw std::invalid_argument("collect_and_label: segment length " +
                                std::to_string(segment_len) + " exceeds episode length " +
                                std::to_string(env.spec().max_episode_length));

  const std::size_t needed = static_cast<std::size_t>(2 * pairs);
  const std::size_t per_episode = (needed + static_cast<std::size_t>(episodes) - 1) /
                                  static_cast<std::size_t>(episodes);

  CollectResult result;
  std::vector<Segment> segments;
  segments.reserve(needed);

  while (segments.size() < needed) {
    std::vector<SegmentStep> traj;
    std::vector<double> obs = env.reset();
    bool done = false;
    while (!done) {
      const int a = policy::sample_action(policy, obs, oracle_rng);
      envs::Transition tr = env.step(a);
      traj.push_back({obs, a, tr.reward});
      obs = std::move(tr.next_observation);
      done = tr.terminal;
      ++result.env_steps;
    }
    if (traj.size() < static_cast<std::size_t>(segment_len)) continue;  // resample

    const int max_offset = static_cast<int>(traj.size()) - segment_len;
    for (std::size_t q = 0; q < per_episode && segments.size() < needed; ++q) {
      const int off = oracle_rng.uniform_int(max_offset + 1);
      Segment seg;
      seg.steps.assign(traj.begin() + off, traj.begin() + off + segment_len);
      segments.push_back(std::move(seg));
    }
  }

  oracle_rng.shuffle(segments);
  result.records.reserve(static_cast<std::size_t>(pairs));
  for (int i = 0; i < pairs; ++i)
    result.records.push_back(synthetic_oracle(
        std::move(segments[static_cast<std::size_t>(2 * i)]),
        std::move(segments[static_cast<std::size_t>(2 * i + 1)]), mode, w, gamma, noisy,
        &oracle_rng));
  return result;
}

void save_dataset_csv(const std::filesystem::path& path,
                      std::span<const PreferenceRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset_csv: cannot open " + path.string());
  out << kDatasetHeader << '\n';
  char buf[40];
  for (const PreferenceRecord& rec : records) {
    write_segment_cell(out, rec.a);
    out << ',';
    write_segment_cell(out, rec.b);
    std::snprintf(buf, sizeof buf, "%.17g", rec.mu_a);
    out << ',' << buf;
    std::snprintf(buf, sizeof buf, "%.17g", rec.mu_b);
    out << ',' << buf << '\n';
  }
  if (!out) throw std::runtime_error("save_dataset_csv: write failed " + path.string());
}

std::vector<PreferenceRecord> load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kDatasetHeader)
    throw std::runtime_error("load_dataset_csv: bad header in " + path.string());

  std::vector<PreferenceRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4)
      throw std::runtime_error("load_dataset_csv: expected 4 columns in " + path.string());
    PreferenceRecord rec;
    rec.a = parse_segment_cell(cells[0]);
    rec.b = parse_segment_cell(cells[1]);
    rec.mu_a = std::stod(cells[2]);
    rec.mu_b = std::stod(cells[3]);
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace fprl::pref
