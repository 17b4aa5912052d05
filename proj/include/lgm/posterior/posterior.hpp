#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lgm/adjoint/adjoint.hpp"
#include "lgm/newton/newton.hpp"
#include "lgm/rng.hpp"

namespace lgm {

struct GaussianSummary {
  Vector mean;
  Matrix cov;
};

// Approximate predictive distribution of latent values at new inputs given
// cross-covariance K* (rows index new points) and prior covariance K** of
// the new points:
//   mean  = K* ∇log π(θ̂)
//   cov   = K** − K* R K*ᵀ
// evaluated through the saved factors of the fit's strategy. At the
// training inputs (K* = K, K** = K) the mean reproduces θ̂ by the
// self-consistency of the mode.
inline GaussianSummary predictive(const LaplaceFit& fit, const Matrix& k_star,
                                  const Matrix& k_star_star) {
  int n = static_cast<int>(fit.theta.size());
  check_dim(k_star.cols() == n, "predictive: K* columns");
  check_square(k_star_star, "predictive");
  check_dim(k_star_star.rows() == k_star.rows(), "predictive: K** rows");

  GaussianSummary g;
  g.mean = matvec(k_star, fit.grad);
  const BFactorization& f = fit.fact;
  switch (f.strategy) {
    case BStrategy::B1: {
      // V = L\(Wʳᵀ K*ᵀ); cov = K** − Vᵀ V
      Matrix rhs = bd_mul_dense(f.w_root.transposed(), transpose(k_star));
      Matrix v = tri_solve(f.chol, rhs, Triangle::Lower);
      g.cov = k_star_star - gram(v);
      break;
    }
    case BStrategy::B2: {
      Matrix r = compute_R(fit);
      g.cov = k_star_star - matmul(k_star, matmul(r, transpose(k_star)));
      break;
    }
    case BStrategy::B3: {
      // cov = K** − K* (W − W (U\(L\(K W)))) K*ᵀ
      Matrix kw = dense_mul_bd(fit.k, f.w);
      Matrix c = lu_solve(f.lu, kw);
      Matrix inner = f.w.to_dense() - bd_mul_dense(f.w, c);
      g.cov = k_star_star - matmul(k_star, matmul(inner, transpose(k_star)));
      break;
    }
  }
  return g;
}

// The latent conditional at the training inputs: mean θ̂, covariance
// A = (K⁻¹ + W)⁻¹.
inline GaussianSummary conditional_latent(const LaplaceFit& fit) {
  GaussianSummary g;
  g.mean = fit.theta;
  g.cov = compute_A(fit);
  return g;
}

// Cholesky factor of a covariance that may be semi-definite to roundoff:
// retries with jitter added to the diagonal, starting at
// 1e-12 · trace/n and doubling up to eight times before giving up.
inline Matrix covariance_root(const Matrix& cov) {
  check_square(cov, "covariance_root");
  int n = cov.rows();
  if (n == 0) return cov;
  // An exactly-zero covariance is a point mass: its root is zero, but the
  // jitter below would also be zero and the ladder could never terminate.
  if (max_abs(cov) == 0.0) return Matrix(n, n);
  try {
    return cholesky(cov);
  } catch (const NotPositiveDefiniteError&) {
  }
  double trace = 0;
  for (int i = 0; i < n; ++i) trace += cov(i, i);
  double jitter = 1e-12 * trace / n;
  for (int attempt = 0; attempt < 8; ++attempt, jitter *= 2.0) {
    Matrix padded = cov;
    for (int i = 0; i < n; ++i) padded(i, i) += jitter;
    try {
      return cholesky(padded);
    } catch (const NotPositiveDefiniteError&) {
    }
  }
  throw ConditioningError(
      "covariance stayed indefinite after the jitter ladder was exhausted");
}

// Draws from a Gaussian summary; rows are draws. Bit-identical across runs
// for a fixed seed.
inline Matrix sample(const GaussianSummary& g, std::uint64_t seed, int count) {
  int n = static_cast<int>(g.mean.size());
  check_dim(g.cov.rows() == n && g.cov.cols() == n, "sample: summary shape");
  if (count < 0) throw ContractError("sample: negative draw count");
  Matrix root = covariance_root(g.cov);
  NormalSource normal(seed);
  Matrix draws(count, n);
  Vector z(n);
  for (int d = 0; d < count; ++d) {
    for (int i = 0; i < n; ++i) z[i] = normal();
    for (int i = 0; i < n; ++i) {
      double s = g.mean[i];
      for (int j = 0; j <= i; ++j) s += root(i, j) * z[j];
      draws(d, i) = s;
    }
  }
  return draws;
}

}  // namespace lgm
