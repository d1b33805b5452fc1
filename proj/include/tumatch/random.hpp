// Seeded random numbers with a bit-for-bit reproducible output.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. Uniform draws use the top 53 bits of each output directly rather
// than std::uniform_real_distribution, whose algorithm is implementation
// defined.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tumatch {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(engine_() >> 11) * 0x1.0p-53);
  }

  /// Uniform integer in [lo, hi].
  long uniform_int(long lo, long hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<long>(engine_() % span);
  }

  /// Standard Gumbel (EV1) draw by inverse CDF.
  double gumbel() { return -std::log(-std::log(uniform_open())); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tumatch
