#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lgm/models/interfaces.hpp"

namespace lgm {

// Closed form of the one-compartment absorption system
//   dm_gut/dt  = −k₁ m_gut
//   dm_cent/dt =  k₁ m_gut − k₂ m_cent
// from initial masses (m⁰_gut, m⁰_cent). Valid only for distinct rates;
// near-coincident rates are rejected outright rather than switched to a
// limiting branch, because the cancellation in (k₁ − k₂) has no accuracy
// guarantee there.
template <class S>
std::pair<S, S> pk_solution(double m0_gut, double m0_cent, const S& k1,
                            const S& k2, double t) {
  using std::exp;
  if (std::fabs(value_of(k1) - value_of(k2)) < 1e-8)
    throw DegenerateParameterError(
        "absorption and elimination rates coincide (k1 = " +
        std::to_string(value_of(k1)) + ", k2 = " +
        std::to_string(value_of(k2)) + ")");
  S gut = m0_gut * exp(-(k1 * t));
  S dk = k1 - k2;
  S bracket = m0_gut * (k1 * (1.0 - exp((k2 - k1) * t))) + dk * m0_cent;
  S cent = (exp(-(k2 * t)) / dk) * bracket;
  return {std::move(gut), std::move(cent)};
}

struct PkPatient {
  Vector times;
  Vector amounts;  // measured central-compartment amounts
};

// Hierarchical pharmacokinetic likelihood over P patients. Each patient
// receives one dose into the gut at t = 0 and contributes Gaussian
// measurements of the central compartment. Patient rates deviate from the
// population rates on the log scale:
//   k₁ = exp(log k1pop + θ_{2p}),  k₂ = exp(log k2pop + θ_{2p+1})
// so θ interleaves the per-patient deviations and the Hessian in θ is
// block diagonal with 2×2 patient blocks. η = (log σ, log k1pop, log k2pop).
class PkLikelihood : public LikelihoodBase<PkLikelihood> {
public:
  explicit PkLikelihood(std::vector<PkPatient> patients, double dose = 1.0,
                        double initial_central = 0.0)
      : patients_(std::move(patients)), dose_(dose),
        initial_central_(initial_central) {
    if (patients_.empty()) throw ContractError("pk likelihood: no patients");
    observations_ = 0;
    for (const PkPatient& p : patients_) {
      if (p.times.size() != p.amounts.size())
        throw ContractError("pk likelihood: ragged patient record");
      observations_ += static_cast<int>(p.times.size());
    }
  }

  int latent_dim() const override {
    return 2 * static_cast<int>(patients_.size());
  }
  int block_size() const override { return 2; }
  int eta_dim() const override { return 3; }

  template <class S>
  S density_impl(std::span<const S> theta, std::span<const S> eta) const {
    using std::exp;
    if (static_cast<int>(theta.size()) != latent_dim() || eta.size() != 3)
      throw ContractError("pk likelihood: argument shapes");
    const S& log_sigma = eta[0];
    S sigma = exp(log_sigma);
    S inv_var = 1.0 / (sigma * sigma);
    S acc = -static_cast<double>(observations_) *
            (log_sigma + 0.5 * 1.8378770664093454835606594728112353);
    for (std::size_t p = 0; p < patients_.size(); ++p) {
      S k1 = exp(eta[1] + theta[2 * p]);
      S k2 = exp(eta[2] + theta[2 * p + 1]);
      for (std::size_t j = 0; j < patients_[p].times.size(); ++j) {
        S cent = pk_solution(dose_, initial_central_, k1, k2,
                             patients_[p].times[j])
                     .second;
        S r = patients_[p].amounts[j] - cent;
        acc -= 0.5 * ((r * r) * inv_var);
      }
    }
    return acc;
  }

  const std::vector<PkPatient>& patients() const { return patients_; }
  double dose() const { return dose_; }

private:
  std::vector<PkPatient> patients_;
  double dose_;
  double initial_central_;
  int observations_;
};

}  // namespace lgm
