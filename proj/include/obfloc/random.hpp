#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace obfloc {

// SplitMix64 in counter form: draw i is mix(seed + (i + 1) * golden). The
// stream is a pure function of (seed, counter), so results never depend on
// the standard library's distribution implementations.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed = 0) : seed_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  result_type operator()() { return mix(seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

  // Uniform in [0, n) by rejection; n > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = max() - max() % n;
    for (;;) {
      const std::uint64_t r = (*this)();
      if (r < limit) return r % n;
    }
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (one value per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// Seed for an independent sub-stream, e.g. one per query or per camera.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) { return seed ^ index; }

}  // namespace obfloc
