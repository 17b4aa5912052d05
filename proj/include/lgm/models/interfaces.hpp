#pragma once

#include <span>
#include <vector>

#include "lgm/autodiff/sweeps.hpp"
#include "lgm/linalg/matrix.hpp"

namespace lgm {

// Observation model log π(y | θ, η) with data bound at construction.
// Implementations must be evaluable on every scalar of the tower up to
// depth three, declare the latent dimension n, the Hessian block size m
// (the Hessian of log π in θ must be block diagonal with m×m blocks), and
// the number of extra likelihood parameters T. The block structure is
// trusted by every consumer.
class LikelihoodModel {
public:
  virtual ~LikelihoodModel() = default;

  virtual int latent_dim() const = 0;
  virtual int block_size() const = 0;
  virtual int eta_dim() const = 0;

  virtual double log_density(std::span<const double> theta,
                             std::span<const double> eta) const = 0;
  virtual Dual<double> log_density(std::span<const Dual<double>> theta,
                                   std::span<const Dual<double>> eta) const = 0;
  virtual Var log_density(std::span<const Var> theta,
                          std::span<const Var> eta) const = 0;
  virtual Dual<Var> log_density(std::span<const Dual<Var>> theta,
                                std::span<const Dual<Var>> eta) const = 0;
  virtual Dual<Dual<Var>> log_density(
      std::span<const Dual<Dual<Var>>> theta,
      std::span<const Dual<Dual<Var>>> eta) const = 0;
};

// Generates the per-scalar virtual overloads from a single template
// implementation `S density_impl(std::span<const S>, std::span<const S>)`
// on the derived model.
template <class Derived>
class LikelihoodBase : public LikelihoodModel {
public:
  double log_density(std::span<const double> theta,
                     std::span<const double> eta) const override {
    return self().template density_impl<double>(theta, eta);
  }
  Dual<double> log_density(std::span<const Dual<double>> theta,
                           std::span<const Dual<double>> eta) const override {
    return self().template density_impl<Dual<double>>(theta, eta);
  }
  Var log_density(std::span<const Var> theta,
                  std::span<const Var> eta) const override {
    return self().template density_impl<Var>(theta, eta);
  }
  Dual<Var> log_density(std::span<const Dual<Var>> theta,
                        std::span<const Dual<Var>> eta) const override {
    return self().template density_impl<Dual<Var>>(theta, eta);
  }
  Dual<Dual<Var>> log_density(
      std::span<const Dual<Dual<Var>>> theta,
      std::span<const Dual<Dual<Var>>> eta) const override {
    return self().template density_impl<Dual<Dual<Var>>>(theta, eta);
  }

private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

// Prior covariance K(φ) of the latent vector. Evaluable on plain doubles
// and on reverse-mode scalars (depth one), which is all the hyperparameter
// gradient needs. `diagonal()` declares structure; storage is dense either
// way.
class CovarianceModel {
public:
  virtual ~CovarianceModel() = default;

  virtual int dim() const = 0;
  virtual int param_dim() const = 0;
  virtual bool diagonal() const = 0;

  virtual Matrix matrix(std::span<const double> phi) const = 0;
  virtual MatrixT<Var> matrix(std::span<const Var> phi) const = 0;
};

template <class Derived>
class CovarianceBase : public CovarianceModel {
public:
  Matrix matrix(std::span<const double> phi) const override {
    return self().template matrix_impl<double>(phi);
  }
  MatrixT<Var> matrix(std::span<const Var> phi) const override {
    return self().template matrix_impl<Var>(phi);
  }

private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

namespace detail {

// Adapts a likelihood to a scalar field over θ with η held constant.
template <class S>
std::vector<S> promote_constants(const Vector& v) {
  std::vector<S> out;
  out.reserve(v.size());
  for (double x : v) out.emplace_back(x);
  return out;
}

struct ThetaField {
  const LikelihoodModel* lik;
  const Vector* eta;

  template <class SVec>
  auto operator()(const SVec& theta) const {
    using S = typename SVec::value_type;
    std::vector<S> eta_s = promote_constants<S>(*eta);
    return lik->log_density(
        std::span<const S>(theta.data(), theta.size()),
        std::span<const S>(eta_s.data(), eta_s.size()));
  }
};

}  // namespace detail

inline double loglik_value(const LikelihoodModel& lik, const Vector& theta,
                           const Vector& eta) {
  return lik.log_density(std::span<const double>(theta.data(), theta.size()),
                         std::span<const double>(eta.data(), eta.size()));
}

// ∇_θ log π(y | θ, η): one reverse sweep with η as constants.
inline Vector loglik_gradient(const LikelihoodModel& lik, const Vector& theta,
                              const Vector& eta) {
  TapeScope scope;
  std::vector<Var> ts(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) ts[i] = Var::leaf(theta[i]);
  std::vector<Var> es = detail::promote_constants<Var>(eta);
  Var y = lik.log_density(std::span<const Var>(ts.data(), ts.size()),
                          std::span<const Var>(es.data(), es.size()));
  detail::check_output_finite(y.value(), "loglik_gradient");
  Vector g(theta.size(), 0.0);
  if (y.tracked()) {
    std::vector<double> adj = scope.tape.reverse(y.slot());
    sweep_counter().reverse += 1;
    for (std::size_t i = 0; i < theta.size(); ++i)
      g[i] = adj[static_cast<std::size_t>(ts[i].slot())];
  }
  return g;
}

// W = −∇²_θ log π(y | θ, η), assembled blockwise from m Hessian probes.
inline BlockDiagonal loglik_curvature(const LikelihoodModel& lik,
                                      const Vector& theta, const Vector& eta) {
  detail::ThetaField field{&lik, &eta};
  BlockDiagonal h = block_hessian(field, theta, lik.block_size());
  BlockDiagonal w(h.dim(), h.block_size());
  int m = h.block_size();
  for (int b = 0; b < h.blocks(); ++b)
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) w.at(b, r, c) = -h.at(b, r, c);
  return w;
}

}  // namespace lgm
