#pragma once

#include <span>
#include <vector>

#include "fprl/mlp.hpp"
#include "fprl/rng.hpp"

namespace fprl::policy {

/// Softmax over the policy head's logits, computed with the usual max shift.
std::vector<double> action_probabilities(const net::Mlp& policy,
                                         std::span<const double> obs);

/// log pi(a | obs) for every action; stable log-softmax.
std::vector<double> log_probabilities(const net::Mlp& policy,
                                      std::span<const double> obs);

/// Samples from the categorical distribution by inverse CDF over one uniform
/// draw. Optionally reports log pi of the sampled action. Every consumer
/// (rollouts, preference collection, evaluation) shares this exact path.
int sample_action(const net::Mlp& policy, std::span<const double> obs, Rng& rng,
                  double* log_prob = nullptr);

/// Highest-probability action, lowest index on ties.
int greedy_action(const net::Mlp& policy, std::span<const double> obs);

}  // namespace fprl::policy
