#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "lgm/models/interfaces.hpp"

namespace lgm {

// Poisson counts with log link: y_i ~ Poisson(exp θ_i), no extra
// likelihood parameters. Log concave in θ, so every factorization
// strategy applies.
class PoissonLogLikelihood : public LikelihoodBase<PoissonLogLikelihood> {
public:
  explicit PoissonLogLikelihood(std::vector<long> y) {
    y_.reserve(y.size());
    log_factorials_ = 0.0;
    for (long c : y) {
      if (c < 0) throw ContractError("poisson likelihood: negative count");
      y_.push_back(static_cast<double>(c));
      log_factorials_ += std::lgamma(static_cast<double>(c) + 1.0);
    }
  }

  int latent_dim() const override { return static_cast<int>(y_.size()); }
  int block_size() const override { return 1; }
  int eta_dim() const override { return 0; }

  template <class S>
  S density_impl(std::span<const S> theta, std::span<const S> eta) const {
    using std::exp;
    if (theta.size() != y_.size() || !eta.empty())
      throw ContractError("poisson likelihood: argument shapes");
    S acc = -log_factorials_;
    for (std::size_t i = 0; i < y_.size(); ++i)
      acc += y_[i] * theta[i] - exp(theta[i]);
    return acc;
  }

  const Vector& counts() const { return y_; }

private:
  Vector y_;
  double log_factorials_;
};

}  // namespace lgm
