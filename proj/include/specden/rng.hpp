#pragma once

#include <cmath>
#include <cstdint>

namespace specden {

/// Counter-based random stream: a SplitMix64 sequence keyed by
/// (seed, counter). Streams for distinct counters are independent, which
/// lets per-element sampling run on any number of workers with
/// bit-identical output.
class RandomStream {
public:
  RandomStream(std::uint64_t seed, std::uint64_t counter)
      : state_(mix(seed ^ 0x9e3779b97f4a7c15ull, counter)) {}

  explicit RandomStream(std::uint64_t seed) : RandomStream(seed, 0) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double strictly inside (0, 1).
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (one value per call, the paired value
  /// is discarded to keep the stream layout simple).
  double next_normal() {
    const double u = next_unit();
    const double v = next_unit();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586476925287 * v);
  }

  /// Poisson sample with the given mean. Exact for all finite means:
  /// product-of-uniforms for small means, Hormann's PTRS transformed
  /// rejection for large ones.
  std::int64_t next_poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean < 10.0) return poisson_small(mean);
    return poisson_ptrs(mean);
  }

private:
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::int64_t poisson_small(double mean) {
    const double limit = std::exp(-mean);
    std::int64_t k = 0;
    double prod = next_unit();
    while (prod > limit) {
      ++k;
      prod *= next_unit();
    }
    return k;
  }

  std::int64_t poisson_ptrs(double mean) {
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      const double u = next_unit() - 0.5;
      const double v = next_unit();
      const double us = 0.5 - std::abs(u);
      const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
      if (us >= 0.07 && v <= v_r) return static_cast<std::int64_t>(kf);
      if (kf < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
          kf * loglam - mean - std::lgamma(kf + 1.0)) {
        return static_cast<std::int64_t>(kf);
      }
    }
  }

  std::uint64_t state_;
};

} // namespace specden
