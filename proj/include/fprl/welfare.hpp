#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace fprl::welfare {

/// One utility per objective, in the environment's fixed objective order.
using UtilityVector = std::vector<double>;

/// Weight vector of the generalized Gini welfare function. Weights must be
/// finite, strictly positive and strictly decreasing; the largest weight is
/// applied to the worst-off objective.
class GiniWeights {
 public:
  explicit GiniWeights(std::vector<double> w);

  const std::vector<double>& values() const { return w_; }
  std::size_t size() const { return w_.size(); }

 private:
  std::vector<double> w_;
};

/// Default weights 1, 1/2, 1/4, ... 1/2^(k-1). Left unnormalized on purpose:
/// scaling all weights by a positive constant never changes any ranking.
GiniWeights default_gini_weights(int k);

/// Generalized Gini welfare: utilities are sorted ascending and dotted with
/// the decreasing weights, so low utilities dominate the score. Concave,
/// impartial between objectives, and strictly monotone in every utility.
double gini_welfare(const UtilityVector& u, const GiniWeights& w);

/// Weights permuted to utility order: entry i is the Gini weight that
/// gini_welfare(u, w) applies to u[i]. Ties are broken by index, lower index
/// first, which makes the permutation (a subgradient of gini_welfare)
/// deterministic. Satisfies dot(sorted_weights(u, w), u) == gini_welfare(u, w).
std::vector<double> sorted_weights(const UtilityVector& u, const GiniWeights& w);

/// Population coefficient of variation: population std dev / |mean|.
/// Throws std::domain_error when the mean is zero (undefined CV).
double coefficient_of_variation(const UtilityVector& u);

/// Smallest and largest utility, as {min, max}.
std::pair<double, double> min_max_utilities(const UtilityVector& u);

}  // namespace fprl::welfare
