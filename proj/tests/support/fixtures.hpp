#pragma once

// Deterministic synthetic datasets shared across the test suite, plus the
// closed-form conjugate (Gaussian-likelihood) formulas that serve as exact
// oracles. Everything is seeded; re-running a test regenerates identical
// data.

#include <cmath>
#include <cstdint>
#include <vector>

#include "lgm/linalg/matrix.hpp"
#include "lgm/models/pk.hpp"
#include "lgm/rng.hpp"
#include "oracles.hpp"

namespace fixtures {

using lgm::Matrix;
using lgm::Vector;

// --- input grids ---------------------------------------------------------

inline std::vector<Vector> grid_inputs(int n, std::uint64_t seed = 5,
                                       int dim = 1) {
  lgm::NormalSource rng(seed);
  return oracles::random_inputs(n, dim, rng);
}

// --- observation sets ----------------------------------------------------

struct GaussianGp {
  std::vector<Vector> x;
  Vector y;
};

inline GaussianGp gaussian_gp(int n = 10, std::uint64_t seed = 11) {
  GaussianGp d;
  d.x = grid_inputs(n, seed);
  lgm::NormalSource rng(seed + 1);
  d.y.resize(n);
  for (int i = 0; i < n; ++i)
    d.y[i] = std::sin(1.4 * d.x[i][0]) + 0.25 * rng();
  return d;
}

struct PoissonGp {
  std::vector<Vector> x;
  std::vector<long> y;
};

inline PoissonGp poisson_gp(int n = 10, std::uint64_t seed = 29) {
  PoissonGp d;
  d.x = grid_inputs(n, seed);
  lgm::NormalSource rng(seed + 1);
  for (int i = 0; i < n; ++i) {
    double log_rate = 0.8 * std::sin(1.1 * d.x[i][0]) + 0.7;
    d.y.push_back(oracles::poisson_draw(std::exp(log_rate), rng));
  }
  return d;
}

struct StudentTGp {
  std::vector<Vector> x;
  Vector y;
};

// With `outlier` large, the residual at one point exceeds the curvature
// sign-change radius at the mode, so W picks up a negative entry there and
// rootless strategies must be used.
inline StudentTGp student_t_gp(int n = 8, std::uint64_t seed = 37,
                               double outlier = 0.0) {
  StudentTGp d;
  d.x = grid_inputs(n, seed);
  lgm::NormalSource rng(seed + 1);
  d.y.resize(n);
  for (int i = 0; i < n; ++i)
    d.y[i] = std::cos(1.2 * d.x[i][0]) + 0.2 * rng();
  if (outlier != 0.0) d.y[n / 2] += outlier;
  return d;
}

// Hierarchical two-compartment measurements: rates per patient are
// log-normal around the population rates, observations are the central
// compartment plus Gaussian noise.
inline std::vector<lgm::PkPatient> pk_patients(
    int n_patients = 10, std::uint64_t seed = 42, double k1pop = 2.0,
    double k2pop = 1.0, double tau1 = 0.2, double tau2 = 0.2,
    double sigma = 0.1, double dose = 1.0) {
  const Vector times = {0.083, 0.167, 0.25, 1.0, 2.0, 4.0};
  lgm::NormalSource rng(seed);
  std::vector<lgm::PkPatient> patients;
  patients.reserve(n_patients);
  for (int p = 0; p < n_patients; ++p) {
    double k1 = k1pop * std::exp(tau1 * rng());
    double k2 = k2pop * std::exp(tau2 * rng());
    lgm::PkPatient pat;
    pat.times = times;
    pat.amounts.resize(times.size());
    for (std::size_t t = 0; t < times.size(); ++t) {
      auto [gut, cent] = lgm::pk_solution(dose, 0.0, k1, k2, times[t]);
      (void)gut;
      pat.amounts[t] = cent + sigma * rng();
    }
    patients.push_back(std::move(pat));
  }
  return patients;
}

// --- closed-form conjugate oracle ----------------------------------------

// Dense isotropic squared-exponential matrix built independently of the
// library kernel.
inline Matrix dense_se(const std::vector<Vector>& a,
                       const std::vector<Vector>& b, double amp, double ell) {
  Matrix k(static_cast<int>(a.size()), static_cast<int>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      double q = 0.0;
      for (std::size_t d = 0; d < a[i].size(); ++d) {
        double diff = a[i][d] - b[j][d];
        q += diff * diff;
      }
      k(static_cast<int>(i), static_cast<int>(j)) =
          amp * amp * std::exp(-0.5 * q / (ell * ell));
    }
  return k;
}

// log N(y | 0, K + sigma^2 I) and its derivatives with respect to the
// kernel amplitude, the lengthscale, and sigma, all assembled from dense
// inverses: dL/dv = 1/2 alpha' (dM/dv) alpha - 1/2 tr(M^{-1} dM/dv).
struct ConjugateOracle {
  double evidence = 0.0;
  double d_amp = 0.0;
  double d_ell = 0.0;
  double d_sigma = 0.0;
};

inline ConjugateOracle conjugate_oracle(const std::vector<Vector>& x,
                                        const Vector& y, double amp,
                                        double ell, double sigma) {
  const int n = static_cast<int>(x.size());
  Matrix k = dense_se(x, x, amp, ell);
  Matrix m = k;
  for (int i = 0; i < n; ++i) m(i, i) += sigma * sigma;
  Matrix m_inv = oracles::gauss_jordan_inverse(m);
  Vector alpha = lgm::matvec(m_inv, y);

  ConjugateOracle r;
  r.evidence = -0.5 * lgm::dot(y, alpha) - 0.5 * oracles::log_det_eigen(m) -
               0.5 * n * 1.8378770664093454835606594728112353;

  auto term = [&](const Matrix& dm) {
    double quad = 0.0, tr = 0.0;
    Vector dm_alpha = lgm::matvec(dm, alpha);
    quad = lgm::dot(alpha, dm_alpha);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) tr += m_inv(i, j) * dm(j, i);
    return 0.5 * quad - 0.5 * tr;
  };

  Matrix dk_amp(n, n), dk_ell(n, n), dm_sigma(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double q = 0.0;
      for (std::size_t d = 0; d < x[i].size(); ++d) {
        double diff = x[i][d] - x[j][d];
        q += diff * diff;
      }
      dk_amp(i, j) = 2.0 / amp * k(i, j);
      dk_ell(i, j) = k(i, j) * q / (ell * ell * ell);
    }
    dm_sigma(i, i) = 2.0 * sigma;
  }
  r.d_amp = term(dk_amp);
  r.d_ell = term(dk_ell);
  r.d_sigma = term(dm_sigma);
  return r;
}

// Closed-form Gaussian-process posterior predictive at test inputs.
inline void conjugate_predictive(const std::vector<Vector>& x_train,
                                 const Vector& y,
                                 const std::vector<Vector>& x_test, double amp,
                                 double ell, double sigma, Vector& mean,
                                 Matrix& cov) {
  Matrix k = dense_se(x_train, x_train, amp, ell);
  for (int i = 0; i < k.rows(); ++i) k(i, i) += sigma * sigma;
  Matrix m_inv = oracles::gauss_jordan_inverse(k);
  Matrix k_star = dense_se(x_test, x_train, amp, ell);
  Matrix k_ss = dense_se(x_test, x_test, amp, ell);
  mean = lgm::matvec(k_star, lgm::matvec(m_inv, y));
  Matrix tmp = lgm::matmul(k_star, m_inv);
  cov = k_ss - lgm::matmul(tmp, lgm::transpose(k_star));
}

}  // namespace fixtures
