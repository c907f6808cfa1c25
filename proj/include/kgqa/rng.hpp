#pragma once

#include <cstdint>
#include <random>

namespace kgqa {

// Seeded RNG used everywhere randomness is needed. Wraps std::mt19937_64 (the
// engine's output sequence is fixed by the standard) but avoids the standard
// distributions, whose output is implementation-defined. All helpers below are
// fully specified so runs with the same seed reproduce bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform draw from [0, n). Modulo bias is negligible for the small n used
  // here and keeps the mapping trivially reproducible.
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Uniform draw from [0, 1) with 53 bits of precision.
  double uniform_real() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform_range(double lo, double hi) {
    return lo + (hi - lo) * uniform_real();
  }

  bool bernoulli(double p) { return uniform_real() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace kgqa
