#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "lgm/models/interfaces.hpp"

namespace lgm {

// Squared-exponential covariance over fixed inputs. Isotropic form takes
// φ = (amplitude, lengthscale); the automatic-relevance form takes one
// lengthscale per input dimension, φ = (amplitude, ℓ₁, …, ℓ_d). Positive
// definite for distinct inputs and positive parameters.
class SquaredExponentialKernel
    : public CovarianceBase<SquaredExponentialKernel> {
public:
  SquaredExponentialKernel(std::vector<Vector> x, bool ard = false)
      : x_(std::move(x)), ard_(ard) {
    if (x_.empty()) throw ContractError("se kernel: no inputs");
    dim_x_ = static_cast<int>(x_.front().size());
    for (const Vector& p : x_)
      if (static_cast<int>(p.size()) != dim_x_)
        throw ContractError("se kernel: ragged inputs");
  }

  int dim() const override { return static_cast<int>(x_.size()); }
  int param_dim() const override { return ard_ ? 1 + dim_x_ : 2; }
  bool diagonal() const override { return false; }

  template <class S>
  MatrixT<S> matrix_impl(std::span<const S> phi) const {
    using std::exp;
    if (static_cast<int>(phi.size()) != param_dim())
      throw ContractError("se kernel: wrong number of hyperparameters");
    int n = dim();
    S amp2 = phi[0] * phi[0];
    std::vector<S> inv_sq;  // 1/ℓ² per input dimension
    inv_sq.reserve(dim_x_);
    for (int k = 0; k < dim_x_; ++k) {
      const S& len = phi[ard_ ? 1 + k : 1];
      inv_sq.push_back(1.0 / (len * len));
    }
    MatrixT<S> k(n, n);
    for (int i = 0; i < n; ++i) {
      k(i, i) = amp2;
      for (int j = 0; j < i; ++j) {
        S q = 0.0;
        for (int d = 0; d < dim_x_; ++d) {
          double diff = x_[i][d] - x_[j][d];
          q += (diff * diff) * inv_sq[d];
        }
        S v = amp2 * exp(-0.5 * q);
        k(i, j) = v;
        k(j, i) = v;
      }
    }
    return k;
  }

private:
  std::vector<Vector> x_;
  bool ard_;
  int dim_x_;
};

// Diagonal prior covariance with a repeating pattern of scales:
// K_ii = τ²_{i mod g} for φ = (τ₁, …, τ_g). Hierarchical models with g
// latent coordinates per group use this with coordinates interleaved
// group-major.
class DiagonalCovariance : public CovarianceBase<DiagonalCovariance> {
public:
  DiagonalCovariance(int n, int groups) : n_(n), groups_(groups) {
    if (groups < 1 || n % groups != 0)
      throw ContractError("diagonal covariance: pattern must divide dimension");
  }

  int dim() const override { return n_; }
  int param_dim() const override { return groups_; }
  bool diagonal() const override { return true; }

  template <class S>
  MatrixT<S> matrix_impl(std::span<const S> phi) const {
    if (static_cast<int>(phi.size()) != groups_)
      throw ContractError("diagonal covariance: wrong number of scales");
    MatrixT<S> k(n_, n_);
    for (int i = 0; i < n_; ++i) {
      const S& tau = phi[i % groups_];
      k(i, i) = tau * tau;
    }
    return k;
  }

private:
  int n_, groups_;
};

}  // namespace lgm
