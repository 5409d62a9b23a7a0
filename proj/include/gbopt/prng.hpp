#pragma once

#include <cstdint>
#include <random>

namespace gbopt {

// Seeded uniform generator with bitwise-reproducible output across
// platforms. std::uniform_real_distribution is implementation-defined, so
// doubles are mapped from the raw engine output directly.
class Prng {
public:
  explicit Prng(std::uint64_t seed) : eng_(seed) {}

  // Uniform in [0, 1), 53 random mantissa bits.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  std::uint64_t raw() { return eng_(); }

private:
  std::mt19937_64 eng_;
};

}  // namespace gbopt
