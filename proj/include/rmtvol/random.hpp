#pragma once

// Counter-based pseudo-random numbers. A stream is identified by (seed,
// stream index); the n-th draw of a stream is a pure function of those
// three integers, so per-row generation can run on any thread and still
// produce bit-identical output. The distributions are implemented here
// rather than taken from <random> because the standard distributions are
// not specified bit-for-bit across library implementations.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace rmtvol {

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix(mix(seed + 0x632BE59BD9B4E019ULL) ^
                 (stream * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL))) {}

  std::uint64_t next_u64() { return mix(key_ + (counter_++) * kGamma); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

  /// Gamma(shape, 1) via Marsaglia-Tsang.
  double gamma(double shape) {
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Student-t with nu degrees of freedom rescaled to unit variance (nu > 2).
  double standardized_t(double nu) {
    const double z = normal();
    const double chi2 = 2.0 * gamma(0.5 * nu);
    return z / std::sqrt(chi2 / nu) * std::sqrt((nu - 2.0) / nu);
  }

  /// Symmetric Pareto: sign * x_m * U^(-1/exponent), x_m = 1.
  double two_sided_pareto(double exponent) {
    const double magnitude = std::pow(uniform(), -1.0 / exponent);
    return uniform() < 0.5 ? -magnitude : magnitude;
  }

  double pareto(double exponent) { return std::pow(uniform(), -1.0 / exponent); }

  double exponential() { return -std::log(uniform()); }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rmtvol
