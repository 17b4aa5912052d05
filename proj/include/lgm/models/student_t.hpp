#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "lgm/models/interfaces.hpp"

namespace lgm {

// Student-t observations y_i ~ t_ν(θ_i, σ) with fixed degrees of freedom ν
// and η = (log σ). Not log concave: the curvature in θ_i flips sign once
// the squared residual exceeds νσ², so strategies requiring a curvature
// root reject it and the general factorization has to be used.
class StudentTLikelihood : public LikelihoodBase<StudentTLikelihood> {
public:
  StudentTLikelihood(Vector y, double nu) : y_(std::move(y)), nu_(nu) {
    if (!(nu > 0)) throw ContractError("student t likelihood: nu must be > 0");
    constant_ = std::lgamma(0.5 * (nu_ + 1.0)) - std::lgamma(0.5 * nu_) -
                0.5 * std::log(nu_ * 3.141592653589793238462643383279502884);
  }

  int latent_dim() const override { return static_cast<int>(y_.size()); }
  int block_size() const override { return 1; }
  int eta_dim() const override { return 1; }

  template <class S>
  S density_impl(std::span<const S> theta, std::span<const S> eta) const {
    using std::exp;
    using std::log1p;
    if (theta.size() != y_.size() || eta.size() != 1)
      throw ContractError("student t likelihood: argument shapes");
    const S& log_sigma = eta[0];
    S sigma = exp(log_sigma);
    S inv_nu_var = 1.0 / ((sigma * sigma) * nu_);
    double n = static_cast<double>(y_.size());
    S acc = n * constant_ - n * log_sigma;
    for (std::size_t i = 0; i < y_.size(); ++i) {
      S r = y_[i] - theta[i];
      acc -= 0.5 * (nu_ + 1.0) * log1p((r * r) * inv_nu_var);
    }
    return acc;
  }

  double nu() const { return nu_; }
  const Vector& y() const { return y_; }

private:
  Vector y_;
  double nu_;
  double constant_;
};

}  // namespace lgm
