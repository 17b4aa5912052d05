// Newton mode-finding: the objective, the three B factorizations, the
// a-averaging linesearch, and the full fit driver.

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "lgm/errors.hpp"
#include "lgm/models/gaussian.hpp"
#include "lgm/models/interfaces.hpp"
#include "lgm/models/kernels.hpp"
#include "lgm/models/poisson.hpp"
#include "lgm/models/student_t.hpp"
#include "lgm/newton/newton.hpp"
#include "lgm/rng.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using lgm::BlockDiagonal;
using lgm::BStrategy;
using lgm::Matrix;
using lgm::Vector;

namespace {

constexpr BStrategy kStrategies[] = {BStrategy::B1, BStrategy::B2,
                                     BStrategy::B3};

// A likelihood that carries no information: log π(y|θ,η) ≡ 0. The prior
// should then be returned untouched: θ̂ = 0 and log-marginal = 0.
class FlatLikelihood : public lgm::LikelihoodBase<FlatLikelihood> {
public:
  explicit FlatLikelihood(int n) : n_(n) {}

  int latent_dim() const override { return n_; }
  int block_size() const override { return 1; }
  int eta_dim() const override { return 0; }

  template <class S>
  S density_impl(std::span<const S>, std::span<const S>) const {
    return S(0.0);
  }

private:
  int n_;
};

Matrix kernel_matrix(const lgm::CovarianceModel& cov, const Vector& phi) {
  return cov.matrix(std::span<const double>(phi.data(), phi.size()));
}

}  // namespace

TEST_CASE("objective reduces to the log likelihood at theta = 0") {
  Vector zero(5, 0.0);
  CHECK(lgm::objective(zero, zero, -3.25) == -3.25);
  CHECK(lgm::objective(zero, zero, 0.0) == 0.0);
}

TEST_CASE("objective quadratic term is -half a.theta") {
  Vector ones(4, 1.0);
  CHECK(lgm::objective(ones, ones, 0.0) == Catch::Approx(-2.0).margin(1e-15));
  Vector theta = {1.0, -2.0, 0.5};
  Vector a = {2.0, 1.0, 4.0};
  // aᵀθ = 2 − 2 + 2 = 2
  CHECK(lgm::objective(theta, a, 1.5) ==
        Catch::Approx(1.5 - 1.0).margin(1e-15));
}

TEST_CASE("objective at a converged fit matches the dense-inverse form") {
  auto data = fixtures::poisson_gp(10, 29);
  lgm::PoissonLogLikelihood lik(data.y);
  lgm::SquaredExponentialKernel cov(data.x);
  Matrix k = kernel_matrix(cov, {1.0, 0.8});

  auto fit = lgm::laplace_fit(k, lik, {}, BStrategy::B3);
  double loglik = lgm::loglik_value(lik, fit.theta, {});
  double psi = lgm::objective(fit.theta, fit.a, loglik);

  // Independent route: Ψ = −½ θ̂ᵀ K⁻¹ θ̂ + log π via an explicit inverse.
  Matrix kinv = oracles::gauss_jordan_inverse(k);
  double quad = lgm::dot(fit.theta, lgm::matvec(kinv, fit.theta));
  double psi_oracle = -0.5 * quad + loglik;
  CHECK(oracles::rel_err(psi, psi_oracle) < 1e-8);
}

TEST_CASE("one Newton step from zero solves the conjugate problem exactly") {
  auto data = fixtures::gaussian_gp(10, 11);
  lgm::GaussianLikelihood lik(data.y);
  lgm::SquaredExponentialKernel cov(data.x);
  Matrix k = kernel_matrix(cov, {1.1, 0.7});
  double sigma = 0.3;
  Vector eta = {sigma};

  // Closed form: the quadratic objective is maximized at K(K + σ²I)⁻¹y.
  int n = k.rows();
  Matrix shifted = k;
  for (int i = 0; i < n; ++i) shifted(i, i) += sigma * sigma;
  Vector alpha = lgm::matvec(oracles::gauss_jordan_inverse(shifted), data.y);
  Vector theta_star = lgm::matvec(k, alpha);

  Vector theta0(n, 0.0);
  Vector grad = lgm::loglik_gradient(lik, theta0, eta);
  BlockDiagonal w = lgm::loglik_curvature(lik, theta0, eta);

  for (BStrategy s : kStrategies) {
    std::optional<Matrix> lk;
    if (s == BStrategy::B2) lk = lgm::cholesky(k);
    auto step = lgm::newton_step(k, theta0, w, grad, s,
                                 lk ? &*lk : nullptr);
    INFO("strategy " << lgm::to_string(s));
    CHECK(oracles::max_rel_err(step.theta, theta_star) < 1e-8);
    // a must satisfy K a = θ_new without K⁻¹ ever being formed.
    CHECK(oracles::max_abs_diff(lgm::matvec(k, step.a), step.theta) < 1e-10);
  }
}

TEST_CASE("newton step with zero curvature returns K times the gradient") {
  lgm::NormalSource rng(314);
  Matrix k = oracles::random_spd(6, rng);
  Vector theta = oracles::random_vector(6, rng, 0.5);
  Vector grad = oracles::random_vector(6, rng, 1.0);
  BlockDiagonal w(6, 1);  // all zero blocks

  Vector expect = lgm::matvec(k, grad);
  for (BStrategy s : kStrategies) {
    auto step = lgm::newton_step(k, theta, w, grad, s);
    INFO("strategy " << lgm::to_string(s));
    CHECK(oracles::max_abs_diff(step.theta, expect) < 1e-10);
    CHECK(oracles::max_abs_diff(step.a, grad) < 1e-12);
    CHECK(step.fact.log_det_b == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("strategies agree on a single step away from zero") {
  auto data = fixtures::poisson_gp(9, 101);
  lgm::PoissonLogLikelihood lik(data.y);
  lgm::SquaredExponentialKernel cov(data.x);
  Matrix k = kernel_matrix(cov, {0.9, 0.6});

  Vector theta(9);
  for (int i = 0; i < 9; ++i) theta[i] = 0.1 * std::sin(1.0 + i);
  Vector grad = lgm::loglik_gradient(lik, theta, {});
  BlockDiagonal w = lgm::loglik_curvature(lik, theta, {});

  auto s1 = lgm::newton_step(k, theta, w, grad, BStrategy::B1);
  auto s2 = lgm::newton_step(k, theta, w, grad, BStrategy::B2);
  auto s3 = lgm::newton_step(k, theta, w, grad, BStrategy::B3);
  CHECK(oracles::max_abs_diff(s1.theta, s3.theta) < 1e-8);
  CHECK(oracles::max_abs_diff(s2.theta, s3.theta) < 1e-8);
  CHECK(oracles::max_abs_diff(s1.a, s3.a) < 1e-8);
  CHECK(oracles::max_abs_diff(s2.a, s3.a) < 1e-8);
}

TEST_CASE("linesearch accepts an improving candidate without halving") {
  int n = 3;
  Matrix k = Matrix::identity(n);
  Vector target = {1.0, -0.5, 2.0};
  auto loglik = [&](const Vector& theta) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      s -= 0.5 * (theta[i] - target[i]) * (theta[i] - target[i]);
    return s;
  };
  // With K = I the optimum of Ψ(a) = −½‖a‖² − ½‖a − t‖² is a = t/2.
  Vector a_prev(n, 0.0);
  double psi_prev = lgm::objective(a_prev, a_prev, loglik(a_prev));
  Vector a_new = {0.5, -0.25, 1.0};

  auto r = lgm::linesearch(loglik, k, a_new, a_prev, psi_prev, 10);
  CHECK(r.halvings == 0);
  CHECK_FALSE(r.exhausted);
  CHECK(r.psi >= psi_prev);
  CHECK(oracles::max_abs_diff(r.a, a_new) == 0.0);
  CHECK(oracles::max_abs_diff(r.theta, a_new) == 0.0);
}

TEST_CASE("linesearch halves an overshoot back into the acceptance region") {
  int n = 2;
  Matrix k = Matrix::identity(n);
  Vector target = {2.0, -1.0};
  auto loglik = [&](const Vector& theta) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      s -= 0.5 * (theta[i] - target[i]) * (theta[i] - target[i]);
    return s;
  };
  Vector a_prev(n, 0.0);
  double psi_prev = lgm::objective(a_prev, a_prev, loglik(a_prev));
  // 3t overshoots badly; 1.5t is still worse than a_prev; 0.75t is better.
  Vector a_new = {6.0, -3.0};

  auto r = lgm::linesearch(loglik, k, a_new, a_prev, psi_prev, 10);
  CHECK(r.halvings == 2);
  CHECK_FALSE(r.exhausted);
  CHECK(r.psi >= psi_prev);
  // Halving is exact binary arithmetic: a = a_new/4 after two averages
  // with zero.
  CHECK(r.a[0] == 1.5);
  CHECK(r.a[1] == -0.75);
}

TEST_CASE("linesearch with identical a-vectors exhausts and flags it") {
  // When the proposed a equals the previous a, halving cannot move the
  // candidate, so a Ψ below the stored previous value can never recover.
  int n = 2;
  Matrix k = Matrix::identity(n);
  auto loglik = [](const Vector&) { return 0.0; };
  Vector a = {1.0, 1.0};
  double psi_at_a = lgm::objective(a, a, 0.0);  // −1
  double psi_prev = psi_at_a + 0.5;             // unattainable

  auto r = lgm::linesearch(loglik, k, a, a, psi_prev, 6);
  CHECK(r.exhausted);
  CHECK(r.halvings == 6);
  CHECK(r.psi == Catch::Approx(psi_at_a).margin(1e-15));
}

TEST_CASE("fit on a conjugate model reproduces the closed-form evidence") {
  auto data = fixtures::gaussian_gp(10, 11);
  lgm::GaussianLikelihood lik(data.y);
  lgm::SquaredExponentialKernel cov(data.x);
  double amp = 1.2, ell = 0.8, sigma = 0.35;
  Matrix k = kernel_matrix(cov, {amp, ell});
  auto oracle = fixtures::conjugate_oracle(data.x, data.y, amp, ell, sigma);

  for (BStrategy s : kStrategies) {
    auto fit = lgm::laplace_fit(k, lik, {sigma}, s);
    INFO("strategy " << lgm::to_string(s));
    CHECK(std::fabs(fit.log_marginal - oracle.evidence) < 1e-8);
  }
}

TEST_CASE("flat likelihood returns the prior untouched") {
  FlatLikelihood lik(5);
  lgm::NormalSource rng(77);
  Matrix k = oracles::random_spd(5, rng);

  for (BStrategy s : kStrategies) {
    auto fit = lgm::laplace_fit(k, lik, {}, s);
    INFO("strategy " << lgm::to_string(s));
    CHECK(oracles::inf_norm(fit.theta) == 0.0);
    CHECK(fit.log_marginal == 0.0);
    CHECK(fit.fact.log_det_b == Catch::Approx(0.0).margin(1e-14));
  }
}

TEST_CASE("strategies agree on the non-conjugate mode and marginal") {
  auto data = fixtures::poisson_gp(10, 29);
  lgm::PoissonLogLikelihood lik(data.y);
  lgm::SquaredExponentialKernel cov(data.x);
  Matrix k = kernel_matrix(cov, {1.0, 0.8});

  auto f1 = lgm::laplace_fit(k, lik, {}, BStrategy::B1);
  auto f2 = lgm::laplace_fit(k, lik, {}, BStrategy::B2);
  auto f3 = lgm::laplace_fit(k, lik, {}, BStrategy::B3);
  CHECK(oracles::max_abs_diff(f1.theta, f3.theta) < 1e-6);
  CHECK(oracles::max_abs_diff(f2.theta, f3.theta) < 1e-6);
  CHECK(std::fabs(f1.log_marginal - f3.log_marginal) < 1e-7);
  CHECK(std::fabs(f2.log_marginal - f3.log_marginal) < 1e-7);
}

TEST_CASE("accepted objective values never decrease") {
  auto data = fixtures::poisson_gp(10, 29);
  lgm::PoissonLogLikelihood lik(data.y);
  lgm::SquaredExponentialKernel cov(data.x);
  Matrix k = kernel_matrix(cov, {1.3, 0.5});

  auto fit = lgm::laplace_fit(k, lik, {}, BStrategy::B3);
  REQUIRE(fit.psi_trace.size() >= 2);
  for (std::size_t i = 1; i < fit.psi_trace.size(); ++i)
    CHECK(fit.psi_trace[i] >= fit.psi_trace[i - 1]);
}

TEST_CASE("converged mode satisfies the stationarity identity") {
  // At the mode, ∇Ψ = 0 means θ̂ = K ∇log π(θ̂), and a = K⁻¹θ̂ means
  // K a = θ̂. Both are checked with the refreshed gradient.
  auto poisson = fixtures::poisson_gp(10, 29);
  auto student = fixtures::student_t_gp(8, 37);

  lgm::PoissonLogLikelihood plik(poisson.y);
  lgm::SquaredExponentialKernel pcov(poisson.x);
  Matrix pk = kernel_matrix(pcov, {1.0, 0.8});

  lgm::StudentTLikelihood slik(student.y, 4.0);
  lgm::SquaredExponentialKernel scov(student.x);
  Matrix sk = kernel_matrix(scov, {1.0, 0.9});
  Vector seta = {std::log(0.5)};

  struct Case {
    const char* name;
    lgm::LaplaceFit fit;
  };
  std::vector<Case> cases;
  cases.push_back({"poisson", lgm::laplace_fit(pk, plik, {}, BStrategy::B3)});
  cases.push_back({"student_t", lgm::laplace_fit(sk, slik, seta,
                                                 BStrategy::B3)});

  for (const auto& c : cases) {
    INFO(c.name);
    Vector kg = lgm::matvec(c.fit.k, c.fit.grad);
    CHECK(oracles::max_abs_diff(c.fit.theta, kg) < 1e-7);
    Vector ka = lgm::matvec(c.fit.k, c.fit.a);
    double scale = std::max(1.0, oracles::inf_norm(c.fit.theta));
    CHECK(oracles::max_abs_diff(ka, c.fit.theta) < 1e-10 * scale);
  }
}

TEST_CASE("final factorization determinant matches the eigenvalue oracle") {
  auto data = fixtures::poisson_gp(10, 29);
  lgm::PoissonLogLikelihood lik(data.y);
  lgm::SquaredExponentialKernel cov(data.x);
  Matrix k = kernel_matrix(cov, {1.0, 0.8});

  for (BStrategy s : kStrategies) {
    auto fit = lgm::laplace_fit(k, lik, {}, s);
    // Sylvester route: log|B| = log|I + W^½ K W^½|, symmetric and
    // well-conditioned (every eigenvalue is at least 1), so the Jacobi
    // oracle keeps full precision where a K⁻¹-based form would not.
    int n = k.rows();
    Matrix inner(n, n);
    for (int i = 0; i < n; ++i) {
      double si = std::sqrt(fit.w.entry(i, i));
      for (int j = 0; j < n; ++j)
        inner(i, j) = si * k(i, j) * std::sqrt(fit.w.entry(j, j));
      inner(i, i) += 1.0;
    }
    double want = oracles::log_det_eigen(inner);
    INFO("strategy " << lgm::to_string(s));
    CHECK(std::fabs(fit.fact.log_det_b - want) < 1e-8);
  }
}

TEST_CASE("iteration cap triggers non-convergence with the trace attached") {
  auto data = fixtures::poisson_gp(10, 29);
  lgm::PoissonLogLikelihood lik(data.y);
  lgm::SquaredExponentialKernel cov(data.x);
  Matrix k = kernel_matrix(cov, {1.0, 0.8});

  lgm::NewtonSettings settings;
  settings.max_iterations = 1;
  try {
    lgm::laplace_fit(k, lik, {}, BStrategy::B3, settings);
    FAIL("expected NonConvergenceError");
  } catch (const lgm::NonConvergenceError& e) {
    CHECK(e.psi_trace().size() == 1);
  }
}

TEST_CASE("negative curvature defeats the root strategy but not the others") {
  // A gross outlier under a heavy-tailed likelihood makes one diagonal
  // entry of W negative at θ = 0, where the blockwise root is attempted
  // first.
  auto data = fixtures::student_t_gp(8, 37, /*outlier=*/6.0);
  lgm::StudentTLikelihood lik(data.y, 4.0);
  lgm::SquaredExponentialKernel cov(data.x);
  Matrix k = kernel_matrix(cov, {1.0, 0.9});
  Vector eta = {std::log(1.0)};

  try {
    lgm::laplace_fit(k, lik, eta, BStrategy::B1);
    FAIL("expected StrategyUnsuitableError");
  } catch (const lgm::StrategyUnsuitableError& e) {
    CHECK(e.pivot() == 4);  // the outlier coordinate
    CHECK(std::string(e.what()).find("positive semi-definite") !=
          std::string::npos);
  }

  auto f2 = lgm::laplace_fit(k, lik, eta, BStrategy::B2);
  auto f3 = lgm::laplace_fit(k, lik, eta, BStrategy::B3);
  CHECK(oracles::max_abs_diff(f2.theta, f3.theta) < 1e-6);
  CHECK(std::fabs(f2.log_marginal - f3.log_marginal) < 1e-7);
  // The mode really does sit in a region of negative curvature somewhere.
  double min_w = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 8; ++i) min_w = std::min(min_w, f3.w.entry(i, i));
  CHECK(min_w < 0.0);
}

TEST_CASE("Cholesky-of-K strategy rejects an indefinite prior covariance") {
  Matrix k(2, 2);
  k(0, 0) = 1.0;
  k(1, 1) = -1.0;
  BlockDiagonal w(2, 1);
  w.at(0, 0, 0) = 0.5;
  w.at(1, 0, 0) = 0.5;

  CHECK_THROWS_AS(lgm::factorize_b(k, w, BStrategy::B2),
                  lgm::StrategyUnsuitableError);

  lgm::GaussianLikelihood lik(Vector{0.3, -0.2});
  try {
    lgm::laplace_fit(k, lik, {1.0}, BStrategy::B2);
    FAIL("expected StrategyUnsuitableError");
  } catch (const lgm::StrategyUnsuitableError& e) {
    CHECK(std::string(e.what()).find("positive definite K") !=
          std::string::npos);
    CHECK(e.pivot() == 1);  // zero-based column where Cholesky broke down
  }
}

TEST_CASE("LU strategy reports a singular system as unsuitable") {
  // W = −I makes I + KW exactly zero when K = I.
  Matrix k = Matrix::identity(3);
  BlockDiagonal w(3, 1);
  for (int i = 0; i < 3; ++i) w.at(i, 0, 0) = -1.0;
  CHECK_THROWS_AS(lgm::factorize_b(k, w, BStrategy::B3),
                  lgm::StrategyUnsuitableError);
}

TEST_CASE("LU strategy defers the log-det when the determinant is negative") {
  // Away from the mode a non-log-concave likelihood can make det(I + KW)
  // negative. The factors must still solve step equations; only the log of
  // the determinant is unavailable, recorded as NaN for the mode refresh
  // to reject if such a factorization survives to convergence.
  Matrix k = Matrix::identity(3);
  BlockDiagonal w(3, 1);
  w.at(0, 0, 0) = -2.0;  // I + KW = diag(−1, 2, 2): determinant −4
  w.at(1, 0, 0) = 1.0;
  w.at(2, 0, 0) = 1.0;
  auto f = lgm::factorize_b(k, w, BStrategy::B3);
  CHECK(std::isnan(f.log_det_b));
  Vector x = lgm::lu_solve(f.lu, {1.0, 2.0, 3.0});
  CHECK(std::fabs(x[0] - -1.0) < 1e-14);
  CHECK(std::fabs(x[1] - 1.0) < 1e-14);
  CHECK(std::fabs(x[2] - 1.5) < 1e-14);
}

TEST_CASE("warm start converges to the same fit in fewer iterations") {
  auto data = fixtures::poisson_gp(10, 29);
  lgm::PoissonLogLikelihood lik(data.y);
  lgm::SquaredExponentialKernel cov(data.x);
  Matrix k = kernel_matrix(cov, {1.0, 0.8});

  auto cold = lgm::laplace_fit(k, lik, {}, BStrategy::B3);
  lgm::NewtonSettings settings;
  settings.theta0 = cold.theta;
  auto warm = lgm::laplace_fit(k, lik, {}, BStrategy::B3, settings);
  CHECK(warm.iterations <= cold.iterations);
  CHECK(oracles::max_abs_diff(warm.theta, cold.theta) < 1e-8);
  CHECK(std::fabs(warm.log_marginal - cold.log_marginal) < 1e-9);
}

TEST_CASE("dimension mismatches are contract errors") {
  lgm::GaussianLikelihood lik(Vector{0.1, 0.2, 0.3});
  Matrix k = Matrix::identity(2);  // wrong size for a 3-point likelihood
  CHECK_THROWS_AS(lgm::laplace_fit(k, lik, {1.0}, BStrategy::B3),
                  lgm::ContractError);

  Matrix k3 = Matrix::identity(3);
  CHECK_THROWS_AS(lgm::laplace_fit(k3, lik, {}, BStrategy::B3),
                  lgm::ContractError);  // eta must have one entry

  lgm::NewtonSettings settings;
  settings.theta0 = Vector{0.0, 0.0};
  CHECK_THROWS_AS(lgm::laplace_fit(k3, lik, {1.0}, BStrategy::B3, settings),
                  lgm::ContractError);
}
