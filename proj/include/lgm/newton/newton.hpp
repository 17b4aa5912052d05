#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lgm/linalg/cholesky.hpp"
#include "lgm/linalg/lu.hpp"
#include "lgm/linalg/matrix.hpp"
#include "lgm/models/interfaces.hpp"

namespace lgm {

// How the matrix B with log|B| = log|K|·|K⁻¹ + W| is built and factored.
//   B1: I + Wʳᵀ K Wʳ with Wʳ the blockwise root of W; needs W ⪰ 0.
//   B2: I + Lᵀ_K W L_K with L_K the Cholesky factor of K; needs K ≻ 0 but
//       tolerates indefinite W.
//   B3: I + K W factored by partially pivoted LU; weakest requirements.
// All three agree on log|B| and on every quantity derived from it.
enum class BStrategy { B1, B2, B3 };

inline const char* to_string(BStrategy s) {
  switch (s) {
    case BStrategy::B1: return "b1";
    case BStrategy::B2: return "b2";
    case BStrategy::B3: return "b3";
  }
  return "?";
}

struct NewtonSettings {
  double tolerance = 1e-8;       // stop when |ΔΨ| drops below this
  int max_iterations = 100;
  bool linesearch = true;
  int max_halvings = 10;
  std::optional<Vector> theta0;  // starting point, zeros when absent
};

// Saved factorization of B at one W. Which members are populated depends
// on the strategy; log_det_b is always set.
struct BFactorization {
  BStrategy strategy = BStrategy::B1;
  BlockDiagonal w;        // curvature the factorization was built from
  BlockDiagonal w_root;   // B1: blockwise root of W
  Matrix chol;            // B1/B2: lower Cholesky factor of B
  Matrix k_chol;          // B2: lower Cholesky factor of K
  LuFactors lu;           // B3: P(I + KW) = LU
  double log_det_b = 0.0;
};

// Converged mode of the latent conditional plus everything the gradient
// and posterior stages reuse: the a-vector K⁻¹θ̂ (maintained without ever
// inverting K), the gradient and curvature of log π at θ̂, and the final
// B factorization.
struct LaplaceFit {
  BStrategy strategy = BStrategy::B1;
  Matrix k;
  Vector theta;          // θ̂
  Vector a;              // K⁻¹ θ̂
  Vector grad;           // ∇_θ log π(y | θ̂, η)
  BlockDiagonal w;       // −∇²_θ log π(y | θ̂, η)
  BFactorization fact;
  double log_marginal = 0.0;
  int iterations = 0;
  std::vector<double> psi_trace;  // accepted objective values, in order
};

// The maximized objective Ψ(θ) = −½ aᵀθ + log π(y | θ, η) with a = K⁻¹θ.
inline double objective(const Vector& theta, const Vector& a, double loglik) {
  return -0.5 * dot(a, theta) + loglik;
}

inline BFactorization factorize_b(const Matrix& k, const BlockDiagonal& w,
                                  BStrategy strategy,
                                  const Matrix* k_chol = nullptr) {
  check_square(k, "factorize_b");
  check_dim(k.rows() == w.dim(), "factorize_b: K and W dimensions");
  BFactorization f;
  f.strategy = strategy;
  f.w = w;
  int n = k.rows();
  switch (strategy) {
    case BStrategy::B1: {
      try {
        f.w_root = block_sqrt(w);
      } catch (const NotPositiveDefiniteError& e) {
        throw StrategyUnsuitableError(
            std::string("strategy b1 needs positive semi-definite curvature; "
                        "block root failed at coordinate ") +
                std::to_string(e.pivot()),
            e.pivot());
      }
      // B = I + Wʳᵀ K Wʳ
      Matrix kw = dense_mul_bd(k, f.w_root);
      Matrix b = bd_mul_dense(f.w_root.transposed(), kw);
      for (int i = 0; i < n; ++i) b(i, i) += 1.0;
      try {
        f.chol = cholesky(b);
      } catch (const NotPositiveDefiniteError& e) {
        throw StrategyUnsuitableError(
            std::string("strategy b1 factorization failed at pivot ") +
                std::to_string(e.pivot()),
            e.pivot());
      }
      f.log_det_b = log_det_chol(f.chol);
      break;
    }
    case BStrategy::B2: {
      if (k_chol) {
        f.k_chol = *k_chol;
      } else {
        try {
          f.k_chol = cholesky(k);
        } catch (const NotPositiveDefiniteError& e) {
          throw StrategyUnsuitableError(
              std::string("strategy b2 needs positive definite K; Cholesky "
                          "failed at pivot ") +
                  std::to_string(e.pivot()),
              e.pivot());
        }
      }
      // B = I + LᵀK W L_K
      Matrix wl = bd_mul_dense(w, f.k_chol);
      Matrix b = matmul(transpose(f.k_chol), wl);
      for (int i = 0; i < n; ++i) b(i, i) += 1.0;
      try {
        f.chol = cholesky(b);
      } catch (const NotPositiveDefiniteError& e) {
        throw StrategyUnsuitableError(
            std::string("strategy b2 factorization failed at pivot ") +
                std::to_string(e.pivot()),
            e.pivot());
      }
      f.log_det_b = log_det_chol(f.chol);
      break;
    }
    case BStrategy::B3: {
      Matrix b = dense_mul_bd(k, w);
      for (int i = 0; i < n; ++i) b(i, i) += 1.0;
      try {
        f.lu = lu_decompose(std::move(b));
      } catch (const SingularMatrixError& e) {
        throw StrategyUnsuitableError(
            std::string("strategy b3 factorization is singular at pivot ") +
                std::to_string(e.pivot()),
            e.pivot());
      }
      // Away from the mode, a non-log-concave likelihood can make
      // det(I + KW) negative. The factors still drive the Newton solve, so
      // record NaN and leave rejecting it to whoever needs the log itself.
      SignedLogDet det = signed_log_det_lu(f.lu);
      f.log_det_b = det.sign > 0 ? det.log_abs
                                 : std::numeric_limits<double>::quiet_NaN();
      break;
    }
  }
  return f;
}

struct NewtonStep {
  Vector theta;
  Vector a;
  BFactorization fact;
};

// One Newton update of the objective: builds b = Wθ + ∇log π, applies the
// strategy's solve for the new a-vector, and returns θ_new = K a. Every
// solve goes through the saved triangular or LU factors; W⁻¹ and K⁻¹ are
// never formed.
inline NewtonStep newton_step(const Matrix& k, const Vector& theta,
                              const BlockDiagonal& w, const Vector& grad,
                              BStrategy strategy,
                              const Matrix* k_chol = nullptr) {
  NewtonStep step;
  step.fact = factorize_b(k, w, strategy, k_chol);
  Vector b = w.matvec(theta) + grad;
  switch (strategy) {
    case BStrategy::B1: {
      // a = b − Wʳ Lᵀ\(L\(Wʳᵀ K b))
      const BlockDiagonal& root = step.fact.w_root;
      Vector kb = matvec(k, b);
      Vector rhs = root.matvec_transposed(kb);
      Vector y = tri_solve(step.fact.chol, rhs, Triangle::Lower);
      y = tri_solve(step.fact.chol, y, Triangle::Lower, Transpose::Yes);
      step.a = b - root.matvec(y);
      step.theta = matvec(k, step.a);
      break;
    }
    case BStrategy::B2: {
      // c = Lᵀ\(L\(Lᵀ_K b)); θ_new = L_K c; a = L_K ᵀ\ c
      const Matrix& lk = step.fact.k_chol;
      Vector rhs = matvec_transposed(lk, b);
      Vector c = tri_solve(step.fact.chol, rhs, Triangle::Lower);
      c = tri_solve(step.fact.chol, c, Triangle::Lower, Transpose::Yes);
      step.theta = matvec(lk, c);
      step.a = tri_solve(lk, c, Triangle::Lower, Transpose::Yes);
      break;
    }
    case BStrategy::B3: {
      // a = b − W (U\(L\(K b)))
      Vector kb = matvec(k, b);
      Vector y = lu_solve(step.fact.lu, kb);
      step.a = b - w.matvec(y);
      step.theta = matvec(k, step.a);
      break;
    }
  }
  return step;
}

struct LinesearchResult {
  Vector a;
  Vector theta;
  double psi = 0.0;
  double loglik = 0.0;
  int halvings = 0;
  bool exhausted = false;
};

// Backtracks a rejected Newton step by averaging a-vectors: each halving
// moves a_new halfway back toward a_prev and costs one objective
// evaluation. Accepts the first candidate whose Ψ is no worse than the
// previous accepted value; runs out after max_halvings and reports the
// last candidate flagged.
template <class LoglikFn>
LinesearchResult linesearch(LoglikFn&& loglik, const Matrix& k, Vector a_new,
                            const Vector& a_prev, double psi_prev,
                            int max_halvings) {
  LinesearchResult r;
  r.theta = matvec(k, a_new);
  r.loglik = loglik(r.theta);
  r.psi = objective(r.theta, a_new, r.loglik);
  r.a = std::move(a_new);
  while (!(r.psi >= psi_prev)) {
    if (r.halvings >= max_halvings) {
      r.exhausted = true;
      return r;
    }
    for (std::size_t i = 0; i < r.a.size(); ++i)
      r.a[i] = 0.5 * (r.a[i] + a_prev[i]);
    r.theta = matvec(k, r.a);
    r.loglik = loglik(r.theta);
    r.psi = objective(r.theta, r.a, r.loglik);
    ++r.halvings;
  }
  return r;
}

// Newton maximization of Ψ followed by one refresh of the gradient,
// curvature, and B factorization at the accepted mode, so every field of
// the returned fit is evaluated at θ̂ itself. Returns the approximate log
// marginal Ψ(θ̂) − ½ log|B|.
inline LaplaceFit laplace_fit(const Matrix& k, const LikelihoodModel& lik,
                              const Vector& eta, BStrategy strategy,
                              const NewtonSettings& settings = {}) {
  check_square(k, "laplace_fit");
  int n = lik.latent_dim();
  check_dim(k.rows() == n, "laplace_fit: K dimension vs likelihood");
  check_dim(static_cast<int>(eta.size()) == lik.eta_dim(),
            "laplace_fit: eta dimension");
  if (settings.theta0)
    check_dim(static_cast<int>(settings.theta0->size()) == n,
              "laplace_fit: theta0 dimension");

  std::optional<Matrix> k_chol;
  if (strategy == BStrategy::B2) {
    try {
      k_chol = cholesky(k);
    } catch (const NotPositiveDefiniteError& e) {
      throw StrategyUnsuitableError(
          std::string("strategy b2 needs positive definite K; Cholesky "
                      "failed at pivot ") +
              std::to_string(e.pivot()),
          e.pivot());
    }
  }
  const Matrix* lk = k_chol ? &*k_chol : nullptr;

  auto loglik = [&](const Vector& theta) {
    return loglik_value(lik, theta, eta);
  };

  LaplaceFit fit;
  fit.strategy = strategy;
  Vector theta = settings.theta0 ? *settings.theta0 : Vector(n, 0.0);
  Vector a_prev;
  double psi_prev = -std::numeric_limits<double>::infinity();
  bool converged = false;
  int iter = 0;

  while (iter < settings.max_iterations) {
    ++iter;
    Vector grad = loglik_gradient(lik, theta, eta);
    BlockDiagonal w = loglik_curvature(lik, theta, eta);
    NewtonStep step = newton_step(k, theta, w, grad, strategy, lk);

    double psi_new;
    if (settings.linesearch && iter > 1) {
      LinesearchResult ls = linesearch(loglik, k, std::move(step.a), a_prev,
                                       psi_prev, settings.max_halvings);
      if (ls.exhausted) {
        // Near the mode the step's improvement drops below rounding noise
        // and no halving can satisfy Ψ ≥ Ψ_prev even though |ΔΨ| is inside
        // the convergence tolerance: that is convergence at the previous
        // iterate. A candidate that is genuinely worse means the search
        // direction failed.
        if (std::isfinite(ls.psi) &&
            std::fabs(ls.psi - psi_prev) < settings.tolerance) {
          converged = true;
          break;
        }
        throw NonConvergenceError(
            "step halving exhausted without improving the objective",
            fit.psi_trace);
      }
      theta = std::move(ls.theta);
      a_prev = std::move(ls.a);
      psi_new = ls.psi;
    } else {
      theta = std::move(step.theta);
      a_prev = std::move(step.a);
      psi_new = objective(theta, a_prev, loglik(theta));
    }

    fit.psi_trace.push_back(psi_new);
    if (std::isfinite(psi_new) &&
        std::fabs(psi_new - psi_prev) < settings.tolerance) {
      converged = true;
      psi_prev = psi_new;
      break;
    }
    psi_prev = psi_new;
  }
  if (!converged)
    throw NonConvergenceError("Newton iteration did not converge in " +
                                  std::to_string(settings.max_iterations) +
                                  " iterations",
                              fit.psi_trace);

  fit.k = k;
  fit.theta = std::move(theta);
  fit.a = std::move(a_prev);
  fit.iterations = iter;
  fit.grad = loglik_gradient(lik, fit.theta, eta);
  fit.w = loglik_curvature(lik, fit.theta, eta);
  fit.fact = factorize_b(k, fit.w, strategy, lk);
  if (!std::isfinite(fit.fact.log_det_b))
    throw StrategyUnsuitableError(
        "strategy b3 log-determinant is undefined at the accepted mode: "
        "I + K W has a non-positive determinant",
        -1);
  fit.log_marginal = objective(fit.theta, fit.a, loglik(fit.theta)) -
                     0.5 * fit.fact.log_det_b;
  return fit;
}

}  // namespace lgm
