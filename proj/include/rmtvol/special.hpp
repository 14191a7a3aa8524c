#pragma once

// Special functions: standard normal CDF and quantile, sine/cosine integrals.

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

namespace rmtvol {

/// Standard normal CDF, written through erfc so the lower tail keeps full
/// relative accuracy.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Inverse standard normal CDF. Acklam's rational approximation followed by
/// one Halley correction step, which brings it to near machine precision.
inline double normal_quantile(double p) {
  if (!(p > 0.0)) return -std::numeric_limits<double>::infinity();
  if (!(p < 1.0)) return std::numeric_limits<double>::infinity();

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

struct SineCosineIntegral {
  double si;
  double ci;
};

/// Si(x) and Ci(x) for x > 0. Power series up to x = 4; beyond that the
/// continued fraction for E1(ix) (a convergent form of the asymptotic
/// expansion), using E1(ix) = -Ci(x) + i (Si(x) - pi/2).
inline SineCosineIntegral sine_cosine_integral(double x) {
  constexpr double eps = 1e-16;
  if (x <= 0.0) return {0.0, -std::numeric_limits<double>::infinity()};
  if (x <= 4.0) {
    double si = 0.0, ci = 0.0;
    double term = x;  // x^(2k+1)/(2k+1)! with sign
    for (int k = 0; k < 60; ++k) {
      const double add = term / (2 * k + 1);
      si += add;
      if (std::abs(add) < eps * std::abs(si)) break;
      term *= -x * x / ((2.0 * k + 2.0) * (2.0 * k + 3.0));
    }
    term = 1.0;  // x^(2k)/(2k)! with sign
    for (int k = 1; k < 60; ++k) {
      term *= -x * x / ((2.0 * k - 1.0) * (2.0 * k));
      const double add = term / (2 * k);
      ci += add;
      if (std::abs(add) < eps * (std::abs(ci) + 1.0)) break;
    }
    constexpr double euler_gamma = 0.57721566490153286061;
    return {si, euler_gamma + std::log(x) + ci};
  }
  using cd = std::complex<double>;
  constexpr double tiny = 1e-300;
  cd b(1.0, x);
  cd c(1.0 / tiny, 0.0);
  cd d = 1.0 / b;
  cd h = d;
  for (int i = 1; i < 100000; ++i) {
    const double a = -static_cast<double>(i) * i;
    b += 2.0;
    d = 1.0 / (a * d + b);
    c = b + a / c;
    const cd del = c * d;
    h *= del;
    if (std::abs(del.real() - 1.0) + std::abs(del.imag()) < eps) break;
  }
  h *= cd(std::cos(x), -std::sin(x));
  return {std::numbers::pi / 2 + h.imag(), -h.real()};
}

inline double sine_integral(double x) {
  if (x < 0.0) return -sine_integral(-x);
  return sine_cosine_integral(x).si;
}

}  // namespace rmtvol
