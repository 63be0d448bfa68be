#include "fprl/policy.hpp"

#include <algorithm>
#include <cmath>

namespace fprl::policy {

std::vector<double> log_probabilities(const net::Mlp& policy,
                                      std::span<const double> obs) {
  std::vector<double> z = policy.forward(obs);
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  const double lse = zmax + std::log(sum);
  for (double& v : z) v -= lse;
  return z;  // now log-probabilities
}

std::vector<double> action_probabilities(const net::Mlp& policy,
                                         std::span<const double> obs) {
  std::vector<double> lp = log_probabilities(policy, obs);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

int sample_action(const net::Mlp& policy, std::span<const double> obs, Rng& rng,
                  double* log_prob) {
  const std::vector<double> lp = log_probabilities(policy, obs);
  const double u = rng.uniform();
  double acc = 0.0;
  int chosen = static_cast<int>(lp.size()) - 1;  // guards rounding at u ~ 1
  for (std::size_t a = 0; a < lp.size(); ++a) {
    acc += std::exp(lp[a]);
    if (u < acc) {
      chosen = static_cast<int>(a);
      break;
    }
  }
  if (log_prob) *log_prob = lp[static_cast<std::size_t>(chosen)];
  return chosen;
}

int greedy_action(const net::Mlp& policy, std::span<const double> obs) {
  const std::vector<double> p = action_probabilities(policy, obs);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace fprl::policy
