#include "fprl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "fprl/policy.hpp"
#include "fprl/preference.hpp"
#include "fprl/util.hpp"

namespace fprl::agent {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

Variant parse_variant(const std::string& name) {
  if (name == "ppo_ground_truth") return Variant::PpoGroundTruth;
  if (name == "pbrl_scalar") return Variant::PbrlScalar;
  if (name == "fpbrl") return Variant::Fpbrl;
  throw config::ConfigError("variant: unknown variant '" + name + "'");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::PpoGroundTruth: return "ppo_ground_truth";
    case Variant::PbrlScalar: return "pbrl_scalar";
    case Variant::Fpbrl: return "fpbrl";
  }
  throw std::logic_error("variant_name: bad enum");
}

void RolloutBuffer::clear() {
  observations.clear();
  actions.clear();
  log_probs.clear();
  rewards.clear();
  terminal.clear();
  final_observation.clear();
  values.clear();
  advantages.clear();
  value_targets.clear();
  scalar_advantages.clear();
}

std::span<const double> RolloutBuffer::observation(int t) const {
  return {observations.data() + static_cast<std::size_t>(t) * observation_width,
          static_cast<std::size_t>(observation_width)};
}

ReturnEstimate::ReturnEstimate(int width, double decay)
    : decay_(decay), acc_(static_cast<std::size_t>(width), 0.0) {
  if (width < 1) throw std::invalid_argument("ReturnEstimate: width must be >= 1");
  if (decay < 0.0 || decay >= 1.0)
    throw std::invalid_argument("ReturnEstimate: decay must lie in [0, 1)");
}

void ReturnEstimate::update(const welfare::UtilityVector& episode_return) {
  if (episode_return.size() != acc_.size())
    throw std::invalid_argument("ReturnEstimate: width mismatch");
  if (decay_ == 0.0) {
    // plain mean as (sum, count); summation is commutative, so update order
    // within an iteration cannot matter
    for (std::size_t j = 0; j < acc_.size(); ++j) acc_[j] += episode_return[j];
  } else if (count_ == 0) {
    acc_ = episode_return;
  } else {
    for (std::size_t j = 0; j < acc_.size(); ++j)
      acc_[j] = decay_ * acc_[j] + (1.0 - decay_) * episode_return[j];
  }
  ++count_;
}

welfare::UtilityVector ReturnEstimate::mean() const {
  if (count_ == 0) throw std::logic_error("ReturnEstimate: no completed episode yet");
  if (decay_ != 0.0) return acc_;
  welfare::UtilityVector m = acc_;
  for (double& x : m) x /= static_cast<double>(count_);
  return m;
}

void gae_advantages(RolloutBuffer& buffer, const net::Mlp& critic, double gamma,
                    double lambda) {
  const int n = buffer.size();
  if (n == 0) throw std::invalid_argument("gae_advantages: empty buffer");
  const int w = buffer.reward_width;
  if (critic.output_width() != w)
    throw std::invalid_argument("gae_advantages: critic width mismatch");

  buffer.values.assign(static_cast<std::size_t>(n) * w, 0.0);
  buffer.advantages.assign(static_cast<std::size_t>(n) * w, 0.0);
  buffer.value_targets.assign(static_cast<std::size_t>(n) * w, 0.0);

  for (int t = 0; t < n; ++t) {
    const std::vector<double> v = critic.forward(buffer.observation(t));
    std::copy(v.begin(), v.end(),
              buffer.values.begin() + static_cast<std::size_t>(t) * w);
  }
  // value after the last step: 0 past a terminal, critic bootstrap otherwise
  std::vector<double> next_value(static_cast<std::size_t>(w), 0.0);
  if (!buffer.terminal.back()) {
    if (static_cast<int>(buffer.final_observation.size()) != buffer.observation_width)
      throw std::invalid_argument("gae_advantages: missing final observation");
    next_value = critic.forward(buffer.final_observation);
  }

  std::vector<double> running(static_cast<std::size_t>(w), 0.0);
  for (int t = n - 1; t >= 0; --t) {
    const bool term = buffer.terminal[static_cast<std::size_t>(t)] != 0;
    const double cont = term ? 0.0 : 1.0;
    for (int j = 0; j < w; ++j) {
      const std::size_t at = static_cast<std::size_t>(t) * w + static_cast<std::size_t>(j);
      const double delta = buffer.rewards[at] +
                           gamma * cont * next_value[static_cast<std::size_t>(j)] -
                           buffer.values[at];
      running[static_cast<std::size_t>(j)] =
          delta + gamma * lambda * cont * running[static_cast<std::size_t>(j)];
      buffer.advantages[at] = running[static_cast<std::size_t>(j)];
      buffer.value_targets[at] = buffer.advantages[at] + buffer.values[at];
    }
    for (int j = 0; j < w; ++j)
      next_value[static_cast<std::size_t>(j)] =
          buffer.values[static_cast<std::size_t>(t) * w + static_cast<std::size_t>(j)];
  }
}

std::vector<double> ggf_scalar_products(const RolloutBuffer& buffer,
                                        const welfare::UtilityVector& j_mean,
                                        const welfare::GiniWeights& w) {
  const int n = buffer.size();
  const int width = buffer.reward_width;
  if (static_cast<std::size_t>(width) != w.size())
    throw std::invalid_argument("ggf_scalar_products: weight width mismatch");
  if (buffer.advantages.size() != static_cast<std::size_t>(n) * width)
    throw std::invalid_argument("ggf_scalar_products: advantages not computed");

  // Weight permutation fixed once per buffer from the return estimate; an
  // absent estimate leaves the weights in index order.
  std::vector<double> wsort =
      j_mean.empty() ? w.values() : welfare::sorted_weights(j_mean, w);

  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int t = 0; t < n; ++t) {
    double s = 0.0;
    for (int j = 0; j < width; ++j)
      s += wsort[static_cast<std::size_t>(j)] *
           buffer.advantages[static_cast<std::size_t>(t) * width + static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(t)] = s;
  }
  return out;
}

void standardize(std::vector<double>& xs) {
  if (xs.empty()) return;
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= n;
  const double sd = std::sqrt(var);
  if (sd < 1e-12) {
    std::fill(xs.begin(), xs.end(), 0.0);  // no spread, no learning signal
    return;
  }
  for (double& x : xs) x = (x - mean) / sd;
}

void ggf_scalarize_advantages(RolloutBuffer& buffer,
                              const welfare::UtilityVector& j_mean,
                              const welfare::GiniWeights& w) {
  buffer.scalar_advantages = ggf_scalar_products(buffer, j_mean, w);
  standardize(buffer.scalar_advantages);
}

std::pair<double, bool> clipped_surrogate(double ratio, double advantage,
                                          double clip_epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
  const double u = ratio * advantage;
  const double c = clipped * advantage;
  // ties count as unclipped so the gradient flows at ratio == 1
  return u <= c ? std::make_pair(u, true) : std::make_pair(c, false);
}

PolicyLossResult policy_surrogate_loss(const net::Mlp& policy,
                                       const RolloutBuffer& buffer,
                                       std::span<const int> idx,
                                       const PpoSettings& settings) {
  if (idx.empty()) throw std::invalid_argument("policy_surrogate_loss: empty index set");
  const double m = static_cast<double>(idx.size());
  const int action_count = policy.output_width();

  PolicyLossResult res;
  res.gradient.assign(policy.param_count(), 0.0);
  double surr_sum = 0.0, entropy_sum = 0.0, ratio_sum = 0.0;
  int clipped_count = 0;

  net::Mlp::Cache cache;
  std::vector<double> out_grad(static_cast<std::size_t>(action_count));
  for (const int t : idx) {
    const std::vector<double> z = policy.forward(buffer.observation(t), cache);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double lse = zmax + std::log(sum);

    std::vector<double> lp(z.size()), p(z.size());
    for (std::size_t a = 0; a < z.size(); ++a) {
      lp[a] = z[a] - lse;
      p[a] = std::exp(lp[a]);
    }
    const int act = buffer.actions[static_cast<std::size_t>(t)];
    const double ratio =
        std::exp(lp[static_cast<std::size_t>(act)] - buffer.log_probs[static_cast<std::size_t>(t)]);
    const double adv = buffer.scalar_advantages[static_cast<std::size_t>(t)];
    const auto [surr, unclipped_active] = clipped_surrogate(ratio, adv, settings.clip_epsilon);

    double entropy = 0.0;
    for (std::size_t a = 0; a < z.size(); ++a) entropy -= p[a] * lp[a];

    surr_sum += surr;
    entropy_sum += entropy;
    ratio_sum += ratio;
    if (std::abs(ratio - 1.0) > settings.clip_epsilon) ++clipped_count;

    // d(loss)/d(logits): the surrogate term through log pi(a), the entropy
    // bonus through the full distribution.
    const double surr_coeff = unclipped_active ? ratio * adv : 0.0;
    for (std::size_t a = 0; a < z.size(); ++a) {
      const double indicator = static_cast<int>(a) == act ? 1.0 : 0.0;
      out_grad[a] = (-surr_coeff * (indicator - p[a]) +
                     settings.entropy_coef * p[a] * (lp[a] + entropy)) /
                    m;
    }
    policy.backward(cache, out_grad, res.gradient);
  }

  res.loss = -(surr_sum / m) - settings.entropy_coef * (entropy_sum / m);
  res.mean_ratio = ratio_sum / m;
  res.clip_fraction = static_cast<double>(clipped_count) / m;
  res.mean_entropy = entropy_sum / m;
  return res;
}

PpoDiagnostics ppo_update(net::Mlp& policy, net::Mlp& critic,
                          const RolloutBuffer& buffer, const PpoSettings& settings,
                          net::Adam& policy_opt, net::Adam& critic_opt,
                          Rng& shuffle_rng) {
  const int n = buffer.size();
  if (n == 0) throw std::invalid_argument("ppo_update: empty buffer");
  if (buffer.scalar_advantages.size() != static_cast<std::size_t>(n) ||
      buffer.value_targets.size() != static_cast<std::size_t>(n) * buffer.reward_width)
    throw std::invalid_argument("ppo_update: advantages/targets not prepared");
  if (settings.epochs < 1 || settings.minibatch < 1)
    throw std::invalid_argument("ppo_update: epochs and minibatch must be >= 1");

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  PpoDiagnostics diag;
  int minibatches = 0;
  const int w = buffer.reward_width;

  std::vector<double> critic_grad(critic.param_count());
  std::vector<double> out_grad(static_cast<std::size_t>(w));
  net::Mlp::Cache cache;

  for (int e = 0; e < settings.epochs; ++e) {
    shuffle_rng.shuffle(order);
    for (int start = 0; start < n; start += settings.minibatch) {
      const int stop = std::min(n, start + settings.minibatch);
      const std::span<const int> idx(order.data() + start,
                                     static_cast<std::size_t>(stop - start));

      PolicyLossResult pl = policy_surrogate_loss(policy, buffer, idx, settings);
      net::clip_gradient_norm(pl.gradient, settings.grad_clip);
      policy_opt.step(policy.params(), pl.gradient);

      std::fill(critic_grad.begin(), critic_grad.end(), 0.0);
      const double m = static_cast<double>(idx.size());
      double vloss = 0.0;
      for (const int t : idx) {
        const std::vector<double> v = critic.forward(buffer.observation(t), cache);
        for (int j = 0; j < w; ++j) {
          const std::size_t at =
              static_cast<std::size_t>(t) * w + static_cast<std::size_t>(j);
          const double err = v[static_cast<std::size_t>(j)] - buffer.value_targets[at];
          vloss += 0.5 * err * err;
          out_grad[static_cast<std::size_t>(j)] = err / m;
        }
        critic.backward(cache, out_grad, critic_grad);
      }
      vloss /= m;
      net::clip_gradient_norm(critic_grad, settings.grad_clip);
      critic_opt.step(critic.params(), critic_grad);

      diag.policy_loss += pl.loss;
      diag.value_loss += vloss;
      diag.mean_ratio += pl.mean_ratio;
      diag.clip_fraction += pl.clip_fraction;
      diag.mean_entropy += pl.mean_entropy;
      ++minibatches;
    }
  }

  const double inv = 1.0 / static_cast<double>(minibatches);
  diag.policy_loss *= inv;
  diag.value_loss *= inv;
  diag.mean_ratio *= inv;
  diag.clip_fraction *= inv;
  diag.mean_entropy *= inv;
  return diag;
}

TrainSummary train(const config::RunConfig& cfg, const std::filesystem::path& out_dir) {
  const Variant variant = parse_variant(cfg.get_string("variant"));
  const std::string env_name = cfg.get_string("env");
  const std::uint64_t master_seed = cfg.get_u64("seed");
  const long total_steps = cfg.get_int("total_steps");
  if (total_steps < 1) throw config::ConfigError("config: total_steps must be >= 1");

  const double gamma = cfg.get_double("agent.gamma");
  const double lambda = cfg.get_double("agent.lambda");
  PpoSettings ppo;
  ppo.clip_epsilon = cfg.get_double("agent.clip_epsilon");
  ppo.entropy_coef = cfg.get_double("agent.entropy_coef");
  ppo.grad_clip = cfg.get_double("agent.grad_clip");
  ppo.epochs = cfg.get_int("agent.ppo_epochs");
  ppo.minibatch = cfg.get_int("agent.minibatch");
  const int rollout_steps = cfg.get_int("agent.rollout_steps");
  if (rollout_steps < 1) throw config::ConfigError("config: agent.rollout_steps must be >= 1");
  const double j_decay = cfg.get_double("agent.j_decay");
  const std::string j_source = cfg.get_string("agent.j_source");
  if (j_source != "ground_truth" && j_source != "learned")
    throw config::ConfigError("config: agent.j_source must be ground_truth or learned");

  std::unique_ptr<envs::Env> env =
      envs::make_env(env_name, cfg, derive_seed(master_seed, stream::env));
  const envs::EnvSpec& spec = env->spec();
  const int K = spec.objective_count;
  const int obs_w = spec.observation_width;
  const int action_count = spec.action_count;

  const bool learned = variant != Variant::PpoGroundTruth;
  const int reward_width = variant == Variant::Fpbrl ? K : 1;

  const welfare::GiniWeights w_metric = welfare::default_gini_weights(K);
  const welfare::GiniWeights w_train =
      reward_width == K ? w_metric : welfare::default_gini_weights(reward_width);

  std::vector<double> ppo_weights = cfg.get_double_list("agent.ppo_weights");
  if (!ppo_weights.empty() && static_cast<int>(ppo_weights.size()) != K)
    throw config::ConfigError("config: agent.ppo_weights needs one weight per objective");

  Rng policy_rng(derive_seed(master_seed, stream::policy_init));
  Rng critic_rng(derive_seed(master_seed, stream::critic_init));
  Rng reward_rng(derive_seed(master_seed, stream::reward_init));
  Rng action_rng(derive_seed(master_seed, stream::action));
  Rng oracle_rng(derive_seed(master_seed, stream::oracle));
  Rng minibatch_rng(derive_seed(master_seed, stream::minibatch));
  Rng pref_shuffle_rng(derive_seed(master_seed, stream::pref_shuffle));

  net::Mlp policy = net::Mlp::glorot({obs_w, 64, 64, action_count}, net::Hidden::Tanh,
                                     net::Output::Linear, policy_rng);
  net::Mlp critic = net::Mlp::glorot({obs_w, 64, 64, reward_width}, net::Hidden::Tanh,
                                     net::Output::Linear, critic_rng);
  net::Adam policy_opt(policy.param_count(), cfg.get_double("agent.lr_policy"));
  net::Adam critic_opt(critic.param_count(), cfg.get_double("agent.lr_critic"));

  std::unique_ptr<pref::RewardModel> reward_model;
  std::unique_ptr<net::Adam> reward_opt;
  std::unique_ptr<envs::Env> pref_env;
  std::vector<pref::PreferenceRecord> dataset;
  const pref::OracleMode oracle_mode =
      variant == Variant::Fpbrl ? pref::OracleMode::Welfare : pref::OracleMode::ScalarSum;
  if (learned) {
    reward_model = std::make_unique<pref::RewardModel>(obs_w, action_count, reward_width,
                                                       reward_rng);
    reward_opt = std::make_unique<net::Adam>(reward_model->network().param_count(),
                                             cfg.get_double("pref.lr"));
    pref_env = envs::make_env(env_name, cfg, derive_seed(master_seed, stream::pref_env));
  }

  const int session_size = cfg.get_int("pref.session_size");
  const int budget = cfg.get_int("pref.budget");
  const int segment_len = cfg.get_int("pref.segment_len");
  const int pref_epochs = cfg.get_int("pref.epochs");
  const int pref_batch = cfg.get_int("pref.batch_size");
  const int episodes_per_session = cfg.get_int("pref.episodes_per_session");
  const bool noisy_labels = cfg.get_bool("pref.noisy_labels");
  const double oracle_gamma = cfg.get_bool("pref.discounted") ? gamma : 1.0;

  std::filesystem::create_directories(out_dir);
  {
    std::ofstream cfg_out(out_dir / "config_used.cfg");
    if (!cfg_out) throw std::runtime_error("train: cannot write config_used.cfg");
    cfg.write(cfg_out);
  }
  std::ofstream metrics(out_dir / "metrics.csv");
  if (!metrics) throw std::runtime_error("train: cannot write metrics.csv");
  metrics << "iteration,env_steps,welfare_score";
  for (int j = 1; j <= K; ++j) metrics << ",obj_" << j;
  metrics << ",cv,min_util,max_util,pref_count,reward_loss,policy_loss,clip_frac,entropy\n";
  metrics.flush();

  // Episodic ground-truth returns drive both the reported metrics and (by
  // default) the welfare weight permutation.
  ReturnEstimate j_truth(K, j_decay);
  ReturnEstimate j_learned(reward_width, j_decay);

  RolloutBuffer buffer;
  buffer.observation_width = obs_w;
  buffer.reward_width = reward_width;

  TrainSummary summary;
  long env_steps = 0;
  int pref_count = 0;
  double last_reward_loss = kNaN;

  std::vector<double> obs;
  bool episode_open = false;
  welfare::UtilityVector episode_gt(static_cast<std::size_t>(K), 0.0);
  welfare::UtilityVector episode_learned(static_cast<std::size_t>(reward_width), 0.0);

  int iteration = 0;
  while (env_steps < total_steps) {
    ++iteration;
    buffer.clear();

    for (int t = 0; t < rollout_steps; ++t) {
      if (!episode_open) {
        obs = env->reset();
        std::fill(episode_gt.begin(), episode_gt.end(), 0.0);
        std::fill(episode_learned.begin(), episode_learned.end(), 0.0);
        episode_open = true;
      }
      double logp = 0.0;
      const int action = policy::sample_action(policy, obs, action_rng, &logp);
      envs::Transition tr = env->step(action);
      ++env_steps;

      welfare::UtilityVector train_reward;
      if (learned) {
        train_reward = reward_model->standardized(obs, action);
        reward_model->record_input(obs, action);
      } else {
        double r = 0.0;
        if (ppo_weights.empty()) {
          for (double x : tr.reward) r += x;
        } else {
          for (std::size_t j = 0; j < tr.reward.size(); ++j)
            r += ppo_weights[j] * tr.reward[j];
        }
        train_reward = {r};
      }

      buffer.observations.insert(buffer.observations.end(), obs.begin(), obs.end());
      buffer.actions.push_back(action);
      buffer.log_probs.push_back(logp);
      buffer.rewards.insert(buffer.rewards.end(), train_reward.begin(), train_reward.end());
      buffer.terminal.push_back(tr.terminal ? 1 : 0);

      for (int j = 0; j < K; ++j)
        episode_gt[static_cast<std::size_t>(j)] += tr.reward[static_cast<std::size_t>(j)];
      for (int j = 0; j < reward_width; ++j)
        episode_learned[static_cast<std::size_t>(j)] += train_reward[static_cast<std::size_t>(j)];

      if (tr.terminal) {
        j_truth.update(episode_gt);
        j_learned.update(episode_learned);
        episode_open = false;
        buffer.final_observation = tr.next_observation;
      } else {
        obs = std::move(tr.next_observation);
        buffer.final_observation = obs;
      }
    }

    if (learned) {
      // The query budget is spread over the whole run: a session fires
      // whenever the spent queries lag behind training progress. Spending the
      // budget up front instead leaves most of the run optimizing against a
      // model frozen on early data, and the policy drifts into states where
      // that model is wrong; both learned variants then decay well below
      // their mid-training scores.
      const double progress =
          std::min(1.0, static_cast<double>(env_steps) / static_cast<double>(total_steps));
      if (pref_count < budget &&
          static_cast<double>(pref_count) <= static_cast<double>(budget) * progress) {
        const int pairs = std::min(session_size, budget - pref_count);
        pref::CollectResult collected = pref::collect_and_label(
            policy, *pref_env, pairs, segment_len, oracle_mode, w_metric, oracle_gamma,
            episodes_per_session, noisy_labels, oracle_rng);
        env_steps += collected.env_steps;
        pref_count += pairs;
        for (pref::PreferenceRecord& rec : collected.records)
          dataset.push_back(std::move(rec));
        const std::vector<double> trace =
            pref::train_reward_model(*reward_model, dataset, pref_epochs, pref_batch,
                                     *reward_opt, w_train, gamma, pref_shuffle_rng);
        if (!trace.empty()) last_reward_loss = trace.back();
      }
      reward_model->refresh_normalization();
    }

    gae_advantages(buffer, critic, gamma, lambda);

    welfare::UtilityVector j_mean;
    if (variant == Variant::Fpbrl) {
      const ReturnEstimate& source = j_source == "learned" ? j_learned : j_truth;
      if (source.has_value()) j_mean = source.mean();
    }
    ggf_scalarize_advantages(buffer, j_mean, w_train);

    const PpoDiagnostics diag =
        ppo_update(policy, critic, buffer, ppo, policy_opt, critic_opt, minibatch_rng);

    double welfare_score = kNaN, cv = kNaN, min_util = kNaN, max_util = kNaN;
    welfare::UtilityVector objs(static_cast<std::size_t>(K), kNaN);
    if (j_truth.has_value()) {
      const welfare::UtilityVector m = j_truth.mean();
      objs = m;
      welfare_score = welfare::gini_welfare(m, w_metric);
      try {
        cv = welfare::coefficient_of_variation(m);
      } catch (const std::domain_error&) {
        cv = kNaN;  // zero-mean utilities leave the CV undefined
      }
      const auto [lo, hi] = welfare::min_max_utilities(m);
      min_util = lo;
      max_util = hi;
    }

    metrics << iteration << ',' << env_steps << ',' << format_double(welfare_score);
    for (int j = 0; j < K; ++j) metrics << ',' << format_double(objs[static_cast<std::size_t>(j)]);
    metrics << ',' << format_double(cv) << ',' << format_double(min_util) << ','
            << format_double(max_util) << ',' << pref_count << ','
            << format_double(last_reward_loss) << ',' << format_double(diag.policy_loss)
            << ',' << format_double(diag.clip_fraction) << ','
            << format_double(diag.mean_entropy) << '\n';
    metrics.flush();
  }

  summary.iterations = iteration;
  summary.env_steps = env_steps;
  summary.preference_count = pref_count;
  summary.policy_checkpoint = out_dir / "policy.ckpt";
  net::save_checkpoint(summary.policy_checkpoint, "policy", policy);
  net::save_checkpoint(out_dir / "critic.ckpt", "critic", critic);
  if (learned) {
    net::save_checkpoint(out_dir / "reward.ckpt", "reward", reward_model->network());
    pref::save_dataset_csv(out_dir / "preferences.csv", dataset);
  }
  return summary;
}

}  // namespace fprl::agent
