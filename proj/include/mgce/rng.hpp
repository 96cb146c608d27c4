#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace mgce {

// Deterministic splittable RNG built on splitmix64. Every random choice in
// the library flows from one root seed through split() substreams, so the
// draw count of one component never perturbs another. The sequence is fully
// specified here (no std::*_distribution), which keeps results reproducible
// across standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer in [0, n), n >= 1.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal deviate (Box-Muller; the paired value is cached).
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u = 1.0 - next_double();  // (0, 1]
    const double v = next_double();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double theta = 2.0 * std::numbers::pi * v;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Child stream derived from the current state and a salt. Does not
  // advance this generator.
  Rng split(std::uint64_t salt) const {
    std::uint64_t z = state_ ^ (0xD1B54A32D192ED03ull + salt * 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return Rng(z ^ (z >> 31));
  }

  // Fisher-Yates shuffle of the first `count` positions (partial when
  // count < v.size()); pass count == v.size() for a full shuffle.
  template <typename T>
  void shuffle_prefix(std::vector<T>& v, std::size_t count) {
    const std::size_t n = v.size();
    if (count > n) count = n;
    for (std::size_t i = 0; i + 1 < n && i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(next_below(n - i));
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mgce
