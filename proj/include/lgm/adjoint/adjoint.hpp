#pragma once

#include <span>
#include <vector>

#include "lgm/newton/newton.hpp"

namespace lgm {

// R = (K + W⁻¹)⁻¹ rebuilt from the saved B factorization. W⁻¹ itself is
// never formed, so W may be singular or indefinite (as the strategy
// permits):
//   B1: R = Wʳ B⁻¹ Wʳᵀ
//   B2: R = W − Dᵀ D with D = L\(Lᵀ_K W)
//   B3: R = W − W (U\(L\(K W)))  i.e. W − W M⁻¹ K W with M = I + K W
inline Matrix compute_R(const LaplaceFit& fit) {
  const BFactorization& f = fit.fact;
  switch (f.strategy) {
    case BStrategy::B1: {
      Matrix rhs = f.w_root.transposed().to_dense();
      Matrix c = tri_solve(f.chol, rhs, Triangle::Lower);
      return gram(c);
    }
    case BStrategy::B2: {
      Matrix rhs = bd_mul_dense(f.w, f.k_chol);          // W L_K
      Matrix d = tri_solve(f.chol, transpose(rhs), Triangle::Lower);
      return f.w.to_dense() - gram(d);
    }
    case BStrategy::B3: {
      Matrix kw = dense_mul_bd(fit.k, f.w);
      Matrix c = lu_solve(f.lu, kw);                     // M⁻¹ K W
      return f.w.to_dense() - bd_mul_dense(f.w, c);
    }
  }
  throw ContractError("compute_R: unknown strategy");
}

// A = (K⁻¹ + W)⁻¹, the covariance of the latent conditional:
//   B1: A = K − Cᵀ C with C = L\(Wʳᵀ K)
//   B2: A = Cᵀ C with C = L\Lᵀ_K
//   B3: A = K − K W (U\(L\K)), algebraically equal to M⁻¹ K
inline Matrix compute_A(const LaplaceFit& fit) {
  const BFactorization& f = fit.fact;
  switch (f.strategy) {
    case BStrategy::B1: {
      Matrix rhs = bd_mul_dense(f.w_root.transposed(), fit.k);
      Matrix c = tri_solve(f.chol, rhs, Triangle::Lower);
      return fit.k - gram(c);
    }
    case BStrategy::B2: {
      Matrix c = tri_solve(f.chol, transpose(f.k_chol), Triangle::Lower);
      return gram(c);
    }
    case BStrategy::B3: {
      Matrix c = lu_solve(f.lu, fit.k);                  // M⁻¹ K
      Matrix kw = dense_mul_bd(fit.k, f.w);
      return fit.k - matmul(kw, c);
    }
  }
  throw ContractError("compute_A: unknown strategy");
}

namespace detail {

inline BlockDiagonal diagonal_blocks(const Matrix& a, int m) {
  BlockDiagonal d(a.rows(), m);
  for (int b = 0; b < d.blocks(); ++b)
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) d.at(b, r, c) = a(b * m + r, b * m + c);
  return d;
}

// Diagonal m×m blocks of G − CᵀC (or of CᵀC when `base` is null) without
// forming the full Gram product.
inline BlockDiagonal gram_diagonal_blocks(const Matrix& c, int m,
                                          const Matrix* base) {
  int n = c.cols();
  BlockDiagonal d(n, m);
  for (int b = 0; b < d.blocks(); ++b)
    for (int r = 0; r < m; ++r)
      for (int j = 0; j < m; ++j) {
        double s = 0;
        for (int k = 0; k < c.rows(); ++k)
          s += c(k, b * m + r) * c(k, b * m + j);
        d.at(b, r, j) = base ? (*base)(b * m + r, b * m + j) - s : s;
      }
  return d;
}

}  // namespace detail

// Diagonal blocks of A only, skipping the dense Gram product. This is the
// optional fast path for the log-det gradient, which consumes nothing of A
// beyond its diagonal blocks; results match compute_A's blocks exactly up
// to roundoff.
inline BlockDiagonal compute_A_blocks(const LaplaceFit& fit, int m) {
  const BFactorization& f = fit.fact;
  switch (f.strategy) {
    case BStrategy::B1: {
      Matrix rhs = bd_mul_dense(f.w_root.transposed(), fit.k);
      Matrix c = tri_solve(f.chol, rhs, Triangle::Lower);
      return detail::gram_diagonal_blocks(c, m, &fit.k);
    }
    case BStrategy::B2: {
      Matrix c = tri_solve(f.chol, transpose(f.k_chol), Triangle::Lower);
      return detail::gram_diagonal_blocks(c, m, nullptr);
    }
    case BStrategy::B3:
      return detail::diagonal_blocks(compute_A(fit), m);
  }
  throw ContractError("compute_A_blocks: unknown strategy");
}

struct TraceGradient {
  Vector s2;   // θ block of ½ ∇_ϑ tr(A ∇²_θ log π)
  Vector s2p;  // η block
};

// Gradient of the log-determinant term −½ log|K⁻¹ + W| with respect to the
// joint input ϑ = (θ, η), evaluated as ½ ∇_ϑ tr(A ∇²_θ log π). Runs
// exactly m paired forward sweeps — tangent pair (vⱼ*, wⱼ*) where vⱼ* is
// the j-strided unit vector and wⱼ* carries column j of every diagonal
// block of A — accumulating on one tape, then a single reverse sweep.
// The count is independent of n, the η dimension, and the number of
// covariance hyperparameters.
inline TraceGradient logdet_gradient(const LikelihoodModel& lik,
                                     const Vector& theta, const Vector& eta,
                                     const BlockDiagonal& a_blocks) {
  int n = static_cast<int>(theta.size());
  int t_dim = static_cast<int>(eta.size());
  int m = lik.block_size();
  check_dim(a_blocks.dim() == n, "logdet_gradient: A blocks");
  check_dim(a_blocks.block_size() == m, "logdet_gradient: block size");

  TapeScope scope;
  using Tower = Dual<Dual<Var>>;
  std::vector<Var> leaves(n + t_dim);
  for (int i = 0; i < n; ++i) leaves[i] = Var::leaf(theta[i]);
  for (int i = 0; i < t_dim; ++i) leaves[n + i] = Var::leaf(eta[i]);

  Var acc(0.0);
  std::vector<Tower> ts(n), es(t_dim);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) {
      double v = (i % m == j) ? 1.0 : 0.0;
      double w = a_blocks.at(i / m, i % m, j);
      ts[i] = Tower(Dual<Var>(leaves[i], Var(v)), Dual<Var>(Var(w), Var(0.0)));
    }
    for (int i = 0; i < t_dim; ++i)
      es[i] = Tower(Dual<Var>(leaves[n + i], Var(0.0)),
                    Dual<Var>(Var(0.0), Var(0.0)));
    Tower y = lik.log_density(std::span<const Tower>(ts.data(), ts.size()),
                              std::span<const Tower>(es.data(), es.size()));
    sweep_counter().forward += 2;
    acc += y.d.d;
  }

  TraceGradient g;
  g.s2.assign(n, 0.0);
  g.s2p.assign(t_dim, 0.0);
  if (acc.tracked()) {
    std::vector<double> adj = scope.tape.reverse(acc.slot());
    sweep_counter().reverse += 1;
    for (int i = 0; i < n; ++i)
      g.s2[i] = 0.5 * adj[static_cast<std::size_t>(leaves[i].slot())];
    for (int i = 0; i < t_dim; ++i)
      g.s2p[i] = 0.5 * adj[static_cast<std::size_t>(leaves[n + i].slot())];
  }
  return g;
}

// Cotangent of the covariance map: contracting Ω with ∂K/∂φⱼ entrywise
// yields ∂/∂φⱼ of the approximate log marginal.
//   Ω = ½ a aᵀ − ½ R + β ∇log πᵀ  with  β = (I − R K) s₂
inline Matrix omega(const Vector& a, const Matrix& r, const Vector& beta,
                    const Vector& grad) {
  int n = static_cast<int>(a.size());
  Matrix o(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      o(i, j) = 0.5 * a[i] * a[j] - 0.5 * r(i, j) + beta[i] * grad[j];
  return o;
}

// ∇_φ of the approximate log marginal: one reverse sweep through the
// covariance map seeded with the cotangent Ω. ∂K/∂φⱼ is never formed.
inline Vector grad_phi(const CovarianceModel& cov, const Vector& phi,
                       const Matrix& om) {
  int p = cov.param_dim();
  check_dim(static_cast<int>(phi.size()) == p, "grad_phi: phi dimension");
  if (p == 0) return {};
  TapeScope scope;
  std::vector<Var> ps(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) ps[i] = Var::leaf(phi[i]);
  MatrixT<Var> k = cov.matrix(std::span<const Var>(ps.data(), ps.size()));
  check_dim(k.rows() == om.rows() && k.cols() == om.cols(),
            "grad_phi: Omega vs K");
  Var acc(0.0);
  for (int i = 0; i < k.rows(); ++i)
    for (int j = 0; j < k.cols(); ++j) {
      double w = om(i, j);
      if (w != 0.0) acc += w * k(i, j);
    }
  Vector g(phi.size(), 0.0);
  if (acc.tracked()) {
    std::vector<double> adj = scope.tape.reverse(acc.slot());
    sweep_counter().reverse += 1;
    for (std::size_t i = 0; i < phi.size(); ++i)
      g[i] = adj[static_cast<std::size_t>(ps[i].slot())];
  }
  return g;
}

// ∇_η of the approximate log marginal:
//   explicit term  ∂ log π/∂η at (θ̂, η)           (one reverse sweep)
//   log-det term   s₂′ from logdet_gradient
//   implicit term  ∂/∂η [∇_θ log π · u]            (one paired sweep)
// where u = (I + KW)⁻¹ K s₂ is the tangent induced by the shift of θ̂.
inline Vector grad_eta(const LikelihoodModel& lik, const Vector& theta,
                       const Vector& eta, const Vector& s2p, const Vector& u) {
  int t_dim = static_cast<int>(eta.size());
  if (t_dim == 0) return {};
  Vector g = s2p;

  {
    TapeScope scope;
    std::vector<Var> es(t_dim);
    for (int i = 0; i < t_dim; ++i) es[i] = Var::leaf(eta[i]);
    std::vector<Var> ts = detail::promote_constants<Var>(theta);
    Var y = lik.log_density(std::span<const Var>(ts.data(), ts.size()),
                            std::span<const Var>(es.data(), es.size()));
    detail::check_output_finite(y.value(), "grad_eta");
    if (y.tracked()) {
      std::vector<double> adj = scope.tape.reverse(y.slot());
      sweep_counter().reverse += 1;
      for (int i = 0; i < t_dim; ++i)
        g[i] += adj[static_cast<std::size_t>(es[i].slot())];
    }
  }

  {
    TapeScope scope;
    std::vector<Dual<Var>> ts(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i)
      ts[i] = {Var(theta[i]), Var(u[i])};
    std::vector<Dual<Var>> es(t_dim);
    std::vector<std::int64_t> slots(t_dim);
    for (int i = 0; i < t_dim; ++i) {
      es[i] = {Var::leaf(eta[i]), Var(0.0)};
      slots[i] = es[i].v.slot();
    }
    Dual<Var> y = lik.log_density(
        std::span<const Dual<Var>>(ts.data(), ts.size()),
        std::span<const Dual<Var>>(es.data(), es.size()));
    sweep_counter().forward += 1;
    if (y.d.tracked()) {
      std::vector<double> adj = scope.tape.reverse(y.d.slot());
      sweep_counter().reverse += 1;
      for (int i = 0; i < t_dim; ++i)
        g[i] += adj[static_cast<std::size_t>(slots[i])];
    }
  }

  return g;
}

struct MarginalGradient {
  Vector phi;
  Vector eta;
  // Intermediates retained for introspection.
  Vector s2, s2p, u;
  Matrix omega;
};

struct GradientOptions {
  // Compute only the diagonal blocks of A for the log-det gradient.
  bool block_diag_a = false;
};

// Exact gradient of the approximate log marginal with respect to every
// hyperparameter, assembled from the saved fit. The likelihood is
// differentiated with m paired forward sweeps plus one reverse sweep for
// the log-det term and at most three further sweeps for the η terms; the
// covariance map is swept once in reverse. None of these counts grows
// with n, p, or T.
inline MarginalGradient marginal_gradient(const LaplaceFit& fit,
                                          const LikelihoodModel& lik,
                                          const CovarianceModel& cov,
                                          const Vector& phi, const Vector& eta,
                                          const GradientOptions& options = {}) {
  int p = cov.param_dim();
  int t_dim = lik.eta_dim();
  check_dim(static_cast<int>(eta.size()) == t_dim,
            "marginal_gradient: eta dimension");
  MarginalGradient g;
  if (p == 0 && t_dim == 0) return g;

  int m = lik.block_size();
  Matrix r = compute_R(fit);
  BlockDiagonal a_blocks = options.block_diag_a
                               ? compute_A_blocks(fit, m)
                               : detail::diagonal_blocks(compute_A(fit), m);
  TraceGradient trace = logdet_gradient(lik, fit.theta, eta, a_blocks);
  g.s2 = std::move(trace.s2);
  g.s2p = std::move(trace.s2p);

  // β = (I − R K) s₂; u = K β = (I + K W)⁻¹ K s₂.
  Vector ks2 = matvec(fit.k, g.s2);
  Vector beta = g.s2 - matvec(r, ks2);
  if (fit.strategy == BStrategy::B3) {
    g.u = lu_solve(fit.fact.lu, ks2);
  } else {
    g.u = matvec(fit.k, beta);
  }

  if (p > 0) {
    g.omega = omega(fit.a, r, beta, fit.grad);
    g.phi = grad_phi(cov, phi, g.omega);
  }
  if (t_dim > 0) g.eta = grad_eta(lik, fit.theta, eta, g.s2p, g.u);
  return g;
}

}  // namespace lgm
