#include "fprl/welfare.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fprl::welfare {

namespace {

void require_finite(const UtilityVector& u) {
  for (double x : u) {
    if (!std::isfinite(x))
      throw std::invalid_argument("welfare: utility vector has a non-finite component");
  }
}

void require_match(const UtilityVector& u, const GiniWeights& w) {
  if (u.empty()) throw std::invalid_argument("welfare: empty utility vector");
  if (u.size() != w.size())
    throw std::invalid_argument("welfare: utility/weight dimension mismatch");
  require_finite(u);
}

// Permutation that sorts u ascending. Ties resolved by index so the result
// is unique; the lower-indexed objective of a tied pair is treated as the
// worse-off one and receives the larger weight.
std::vector<std::size_t> ascending_order(const UtilityVector& u) {
  std::vector<std::size_t> idx(u.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&u](std::size_t a, std::size_t b) {
    if (u[a] != u[b]) return u[a] < u[b];
    return a < b;
  });
  return idx;
}

}  // namespace

GiniWeights::GiniWeights(std::vector<double> w) : w_(std::move(w)) {
  if (w_.empty()) throw std::invalid_argument("GiniWeights: need at least one weight");
  for (std::size_t i = 0; i < w_.size(); ++i) {
    if (!std::isfinite(w_[i]) || w_[i] <= 0.0)
      throw std::invalid_argument("GiniWeights: weights must be finite and positive");
    if (i > 0 && !(w_[i] < w_[i - 1]))
      throw std::invalid_argument("GiniWeights: weights must be strictly decreasing");
  }
}

GiniWeights default_gini_weights(int k) {
  if (k < 1) throw std::invalid_argument("default_gini_weights: k must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) w[static_cast<std::size_t>(i)] = std::ldexp(1.0, -i);
  return GiniWeights(std::move(w));
}

double gini_welfare(const UtilityVector& u, const GiniWeights& w) {
  require_match(u, w);
  const auto idx = ascending_order(u);
  // Summing in sorted-position order makes the result exactly permutation
  // invariant: any reordering of u produces the identical sorted sequence.
  double s = 0.0;
  for (std::size_t p = 0; p < idx.size(); ++p) s += w.values()[p] * u[idx[p]];
  return s;
}

std::vector<double> sorted_weights(const UtilityVector& u, const GiniWeights& w) {
  require_match(u, w);
  const auto idx = ascending_order(u);
  std::vector<double> out(u.size());
  for (std::size_t p = 0; p < idx.size(); ++p) out[idx[p]] = w.values()[p];
  return out;
}

double coefficient_of_variation(const UtilityVector& u) {
  if (u.empty()) throw std::invalid_argument("coefficient_of_variation: empty vector");
  require_finite(u);
  const double n = static_cast<double>(u.size());
  double mean = 0.0;
  for (double x : u) mean += x;
  mean /= n;
  if (mean == 0.0)
    throw std::domain_error("coefficient_of_variation: undefined for zero mean");
  double var = 0.0;
  for (double x : u) var += (x - mean) * (x - mean);
  var /= n;  // population variance
  return std::sqrt(var) / std::abs(mean);
}

std::pair<double, double> min_max_utilities(const UtilityVector& u) {
  if (u.empty()) throw std::invalid_argument("min_max_utilities: empty vector");
  require_finite(u);
  auto [lo, hi] = std::minmax_element(u.begin(), u.end());
  return {*lo, *hi};
}

}  // namespace fprl::welfare
