#pragma once

// Deterministic random number utilities. Two flavors:
//  - Rng: a sequential splitmix64 stream for generation/optimization loops.
//  - hash2/hash3/hash01: stateless counter-based hashing for per-pixel sample
//    jitter, so a render is a pure function of (seed, pixel, sample) and does
//    not depend on pixel visit order or thread count.
//
// std::uniform_real_distribution is implementation-defined, so byte-stable
// artifacts require fixed arithmetic like this.

#include <cmath>
#include <cstdint>

namespace cargopatch {

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash2(std::uint64_t a, std::uint64_t b) {
  return mix64(a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL);
}

constexpr std::uint64_t hash3(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return hash2(hash2(a, b), c);
}

constexpr std::uint64_t hash4(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                              std::uint64_t d) {
  return hash2(hash3(a, b, c), d);
}

// Uniform double in [0, 1) from a hash value.
inline double to_unit_double(std::uint64_t h) { return (h >> 11) * 0x1.0p-53; }

inline double hash01(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return to_unit_double(hash4(a, b, c, d));
}

// Sequential splitmix64 stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  double uniform() { return to_unit_double(next_u64()); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~0ULL - ~0ULL % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r < limit) return r % n;
    }
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  double normal() {
    // Box-Muller, one value per call pair.
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cargopatch
