#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "lgm/linalg/matrix.hpp"

namespace lgm {

// Effective sample size of one chain by the initial-monotone-sequence
// estimator: sum autocovariances in adjacent pairs, stop at the first
// non-positive pair, and force the pair sums non-increasing. A constant
// chain carries no information and reports zero.
inline double ess_single(const Vector& chain) {
  int n = static_cast<int>(chain.size());
  if (n < 4) return static_cast<double>(n);
  double mean = 0;
  for (double v : chain) mean += v;
  mean /= n;
  auto gamma = [&](int lag) {
    double s = 0;
    for (int i = 0; i + lag < n; ++i)
      s += (chain[i] - mean) * (chain[i + lag] - mean);
    return s / n;
  };
  double g0 = gamma(0);
  if (!(g0 > 0)) return 0.0;
  double sum_pairs = 0;
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; 2 * k + 1 < n; ++k) {
    double pair = gamma(2 * k) + gamma(2 * k + 1);
    if (!(pair > 0)) break;
    if (pair > prev) pair = prev;
    sum_pairs += pair;
    prev = pair;
  }
  double tau = -1.0 + 2.0 * sum_pairs / g0;
  if (tau < 1e-8) tau = 1e-8;
  return n / tau;
}

// Total effective sample size over chains: per-chain estimates summed.
inline double ess(const std::vector<Vector>& chains) {
  double total = 0;
  for (const Vector& c : chains) total += ess_single(c);
  return total;
}

// Monte Carlo standard error of the pooled mean given a total ESS.
inline double mcse(const std::vector<Vector>& chains, double total_ess) {
  double mean = 0;
  long count = 0;
  for (const Vector& c : chains)
    for (double v : c) {
      mean += v;
      ++count;
    }
  if (count == 0 || !(total_ess > 0)) return 0.0;
  mean /= count;
  double var = 0;
  for (const Vector& c : chains)
    for (double v : c) var += (v - mean) * (v - mean);
  var /= count;
  return std::sqrt(var / total_ess);
}

}  // namespace lgm
