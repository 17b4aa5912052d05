#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "lgm/models/interfaces.hpp"

namespace lgm {

// Independent Gaussian observations y_i ~ N(θ_i, σ²) with η = (σ). The one
// likelihood whose integrated approximation is exact, which makes it the
// reference point for end-to-end checks.
class GaussianLikelihood : public LikelihoodBase<GaussianLikelihood> {
public:
  explicit GaussianLikelihood(Vector y) : y_(std::move(y)) {}

  int latent_dim() const override { return static_cast<int>(y_.size()); }
  int block_size() const override { return 1; }
  int eta_dim() const override { return 1; }

  template <class S>
  S density_impl(std::span<const S> theta, std::span<const S> eta) const {
    using std::log;
    if (theta.size() != y_.size() || eta.size() != 1)
      throw ContractError("gaussian likelihood: argument shapes");
    const S& sigma = eta[0];
    S inv_var = 1.0 / (sigma * sigma);
    double n = static_cast<double>(y_.size());
    S acc = -n * log(sigma) - 0.5 * n * 1.8378770664093454835606594728112353;
    for (std::size_t i = 0; i < y_.size(); ++i) {
      S r = y_[i] - theta[i];
      acc -= 0.5 * ((r * r) * inv_var);
    }
    return acc;
  }

  const Vector& y() const { return y_; }

private:
  Vector y_;
};

}  // namespace lgm
