#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <utility>
#include <vector>

#include "lgm/linalg/matrix.hpp"
#include "lgm/rng.hpp"

namespace lgm {

// Log density with gradient over an unconstrained coordinate vector.
// `eval` returns false when the point cannot be evaluated (solver failure,
// domain error); the trajectory that hit it is treated as divergent.
struct GradientTarget {
  int dim = 0;
  std::function<bool(const Vector& q, double& logp, Vector& grad)> eval;
};

struct HmcSettings {
  int chains = 4;
  int iterations = 1000;      // saved draws per chain
  int warmup = 500;           // adaptation iterations, discarded
  int leapfrog_steps = 10;
  double initial_step_size = 0.1;
  double target_accept = 0.8;
  double init_jitter = 0.1;   // per-coordinate N(0, jitter²) on the start
  std::uint64_t seed = 1;
};

struct ChainResult {
  Matrix draws;               // iterations × dim
  double accept_rate = 0.0;   // mean acceptance probability, post-warmup
  int divergences = 0;        // post-warmup divergent trajectories
  double step_size = 0.0;     // step size after adaptation
};

namespace detail {

// Step-size adaptation by dual averaging toward a target acceptance rate.
struct DualAveraging {
  double mu, log_eps, log_eps_bar = 0.0, h_bar = 0.0;
  double gamma = 0.05, t0 = 10.0, kappa = 0.75;
  int t = 0;

  explicit DualAveraging(double eps0)
      : mu(std::log(10.0 * eps0)), log_eps(std::log(eps0)) {}

  double update(double accept_prob, double target) {
    ++t;
    double frac = 1.0 / (t + t0);
    h_bar = (1.0 - frac) * h_bar + frac * (target - accept_prob);
    log_eps = mu - std::sqrt(static_cast<double>(t)) / gamma * h_bar;
    double w = std::pow(static_cast<double>(t), -kappa);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
    return std::exp(log_eps);
  }

  double adapted() const { return std::exp(log_eps_bar); }
};

}  // namespace detail

// One Hamiltonian Monte Carlo chain with identity mass matrix, fixed
// leapfrog path length, and dual-averaged step size during warmup. A
// trajectory whose energy error exceeds 1000 (or that leaves the target's
// domain) counts as divergent and is rejected. Fully deterministic in
// (seed, chain_index).
inline ChainResult hmc_chain(const GradientTarget& target, Vector q,
                             const HmcSettings& s, int chain_index) {
  int dim = target.dim;
  check_dim(static_cast<int>(q.size()) == dim, "hmc_chain: init");
  NormalSource rng(s.seed + static_cast<std::uint64_t>(chain_index));
  const Vector q0 = q;
  double jitter = s.init_jitter;
  for (int i = 0; i < dim; ++i) q[i] = q0[i] + jitter * rng();

  // The jittered start may land where the target cannot be evaluated (for a
  // marginal target, where the inner solver fails); redraw with a shrinking
  // jitter until evaluation succeeds.
  double logp = 0;
  Vector grad(dim, 0.0);
  int tries = 0;
  while (!target.eval(q, logp, grad)) {
    ++tries;
    if (tries > 9)
      throw ContractError("hmc_chain: no evaluable initial point found");
    jitter *= 0.5;
    for (int i = 0; i < dim; ++i)
      q[i] = q0[i] + (tries < 9 ? jitter * rng() : 0.0);
  }

  detail::DualAveraging adapt(s.initial_step_size);
  double eps = s.initial_step_size;

  ChainResult result;
  result.draws = Matrix(s.iterations, dim);
  double accept_sum = 0;

  int total = s.warmup + s.iterations;
  for (int iter = 0; iter < total; ++iter) {
    if (iter == s.warmup && s.warmup > 0) eps = adapt.adapted();
    Vector r(dim);
    for (int i = 0; i < dim; ++i) r[i] = rng();
    double h0 = -logp + 0.5 * dot(r, r);

    Vector q_new = q, grad_new = grad;
    double logp_new = logp;
    bool ok = true;
    for (int step = 0; step < s.leapfrog_steps; ++step) {
      for (int i = 0; i < dim; ++i) r[i] += 0.5 * eps * grad_new[i];
      for (int i = 0; i < dim; ++i) q_new[i] += eps * r[i];
      if (!target.eval(q_new, logp_new, grad_new)) {
        ok = false;
        break;
      }
      for (int i = 0; i < dim; ++i) r[i] += 0.5 * eps * grad_new[i];
    }

    double accept_prob = 0;
    bool divergent = !ok;
    if (ok) {
      double h1 = -logp_new + 0.5 * dot(r, r);
      double dh = h1 - h0;
      if (!std::isfinite(dh) || dh > 1000.0) {
        divergent = true;
      } else {
        accept_prob = dh < 0 ? 1.0 : std::exp(-dh);
      }
    }
    if (rng.uniform() <= accept_prob) {
      q = q_new;
      logp = logp_new;
      grad = grad_new;
    }

    if (iter < s.warmup) {
      eps = adapt.update(accept_prob, s.target_accept);
    } else {
      int saved = iter - s.warmup;
      for (int i = 0; i < dim; ++i) result.draws(saved, i) = q[i];
      accept_sum += accept_prob;
      if (divergent) ++result.divergences;
    }
  }
  result.accept_rate = s.iterations > 0 ? accept_sum / s.iterations : 0.0;
  result.step_size = eps;
  return result;
}

// Runs chains concurrently; `make_target` builds one target per chain so a
// target may carry mutable per-chain state (e.g. warm starts) without any
// sharing across threads. Each chain owns its RNG stream; results are
// ordered by chain index regardless of scheduling.
inline std::vector<ChainResult> run_chains(
    const std::function<GradientTarget(int)>& make_target, const Vector& init,
    const HmcSettings& s) {
  std::vector<std::future<ChainResult>> futures;
  futures.reserve(s.chains);
  for (int c = 0; c < s.chains; ++c)
    futures.push_back(std::async(std::launch::async, [&make_target, init, &s,
                                                      c] {
      GradientTarget target = make_target(c);
      return hmc_chain(target, init, s, c);
    }));
  std::vector<ChainResult> results;
  results.reserve(s.chains);
  for (auto& f : futures) results.push_back(f.get());
  return results;
}

// Convenience overload for a shared stateless target.
inline std::vector<ChainResult> run_chains(const GradientTarget& target,
                                           const Vector& init,
                                           const HmcSettings& s) {
  return run_chains([&target](int) { return target; }, init, s);
}

}  // namespace lgm
