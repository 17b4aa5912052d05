#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lgm {

// Deterministic standard normals from a 64-bit generator. Implemented
// directly (Box–Muller on the generator's bits) so draws for a fixed seed
// are bit-identical across runs and toolchains, independent of any library
// distribution internals.
class NormalSource {
public:
  explicit NormalSource(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(angle);
    have_spare_ = true;
    return r * std::cos(angle);
  }

  // Uniform draw on (0, 1]: never 0, so logs of it are finite.
  double uniform() {
    return (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
  }

  std::uint64_t raw() { return rng_(); }

private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace lgm
