#pragma once

// Level statistics of unfolded spectra: spacing samples, Wigner surmises,
// Kolmogorov-Smirnov tests, surmise normalization fits and the number
// variance, with the GOE prediction for the latter.

#include "rmtvol/core.hpp"
#include "rmtvol/quadrature.hpp"
#include "rmtvol/special.hpp"
#include "rmtvol/unfold.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rmtvol {

enum class SpacingKind { Nearest, NextNearest };

struct SpacingSample {
  std::vector<double> d;
  SpacingKind kind = SpacingKind::Nearest;

  double mean() const {
    double s = 0.0;
    for (double v : d) s += v;
    return d.empty() ? 0.0 : s / static_cast<double>(d.size());
  }
};

/// Consecutive differences of the unfolded values left after trimming
/// `trim` of them from each end.
inline SpacingSample spacings(std::span<const double> xi, double trim = 0.05) {
  const std::vector<double> kept = trim_edges(xi, trim);
  if (kept.size() < 2) throw DataError("too_few_eigenvalues", "spacings need at least 2 unfolded values");
  SpacingSample s;
  for (std::size_t i = 1; i < kept.size(); ++i) s.d.push_back(kept[i] - kept[i - 1]);
  return s;
}

/// Next-nearest spacings: nearest spacings of the even and odd subsets,
/// concatenated.
inline SpacingSample next_nearest_spacings(std::span<const double> xi_even, std::span<const double> xi_odd,
                                           double trim = 0.05) {
  SpacingSample s = spacings(xi_even, trim);
  const SpacingSample o = spacings(xi_odd, trim);
  s.d.insert(s.d.end(), o.d.begin(), o.d.end());
  s.kind = SpacingKind::NextNearest;
  return s;
}

enum class Ensemble { GOE, GUE, GSE };

inline const char* to_string(Ensemble e) {
  switch (e) {
    case Ensemble::GOE: return "goe";
    case Ensemble::GUE: return "gue";
    case Ensemble::GSE: return "gse";
  }
  return "unknown";
}

inline std::optional<Ensemble> parse_ensemble(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "goe") return Ensemble::GOE;
  if (s == "gue") return Ensemble::GUE;
  if (s == "gse") return Ensemble::GSE;
  return std::nullopt;
}

/// Wigner surmise densities, normalized to unit mass and unit mean.
inline double wigner_pdf(double d, Ensemble e) {
  if (d < 0.0) return 0.0;
  constexpr double pi = std::numbers::pi;
  switch (e) {
    case Ensemble::GOE: return 0.5 * pi * d * std::exp(-0.25 * pi * d * d);
    case Ensemble::GUE: return 32.0 / (pi * pi) * d * d * std::exp(-4.0 * d * d / pi);
    case Ensemble::GSE: {
      const double c = std::pow(2.0, 18) / (std::pow(3.0, 6) * pi * pi * pi);
      const double d2 = d * d;
      return c * d2 * d2 * std::exp(-64.0 * d2 / (9.0 * pi));
    }
  }
  return 0.0;
}

/// Closed-form surmise CDFs (regularized incomplete gamma of order 1, 3/2, 5/2).
inline double wigner_cdf(double d, Ensemble e) {
  if (d <= 0.0) return 0.0;
  constexpr double pi = std::numbers::pi;
  const double two_over_sqrt_pi = 2.0 / std::sqrt(pi);
  switch (e) {
    case Ensemble::GOE: return -std::expm1(-0.25 * pi * d * d);
    case Ensemble::GUE: {
      const double x = 2.0 * d / std::sqrt(pi);
      return std::erf(x) - two_over_sqrt_pi * x * std::exp(-x * x);
    }
    case Ensemble::GSE: {
      const double y = 64.0 * d * d / (9.0 * pi);
      const double r = std::sqrt(y);
      return std::erf(r) - two_over_sqrt_pi * r * std::exp(-y) * (1.0 + 2.0 * y / 3.0);
    }
  }
  return 0.0;
}

struct KSResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// Asymptotic Kolmogorov tail probability Q(x) = 2 sum (-1)^{k-1} exp(-2 k^2 x^2),
/// with the Jacobi-transformed series for small x where the alternating
/// series converges slowly. Terms below 1e-10 end the sums.
inline double kolmogorov_q(double x) {
  if (!(x > 0.0)) return 1.0;
  constexpr double pi = std::numbers::pi;
  if (x < 1.18) {
    double s = 0.0;
    for (int k = 1; k < 100; ++k) {
      const double m = 2.0 * k - 1.0;
      const double term = std::exp(-m * m * pi * pi / (8.0 * x * x));
      s += term;
      if (term < 1e-10) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / x * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k < 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-10) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

/// sup |F_n - F| over the sample, checking both sides of every step.
inline double ks_statistic(std::span<const double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw DataError("too_few_samples", "KS statistic needs a non-empty sample");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return std::min(d, 1.0);
}

/// One-sample KS test; p from the Kolmogorov distribution evaluated at
/// (sqrt(n) + 0.12 + 0.11 / sqrt(n)) D.
inline KSResult ks_test(std::span<const double> sample, const std::function<double(double)>& cdf) {
  if (sample.size() < 5) throw DataError("too_few_samples", "KS test needs at least 5 observations");
  KSResult r;
  r.n = sample.size();
  r.statistic = ks_statistic(sample, cdf);
  const double rn = std::sqrt(static_cast<double>(r.n));
  r.p_value = kolmogorov_q((rn + 0.12 + 0.11 / rn) * r.statistic);
  return r;
}

struct NormalizationFit {
  double beta = 0.0;
  double stderr_beta = 0.0;
  double bin_width = 0.0;
  std::vector<double> centers;  // bins used in the fit
  std::vector<double> density;  // histogram density at those bins
  std::vector<double> model;    // surmise density at those bins
};

/// Least-squares beta in h(d_k) ~ beta * P(d_k) over histogram bins. Bin
/// width defaults to Freedman-Diaconis; bins beyond the last occupied bin and
/// bins where the surmise vanishes are excluded.
inline NormalizationFit fit_normalization(std::span<const double> sample, Ensemble e,
                                          std::optional<double> bin_width = std::nullopt) {
  const std::size_t n = sample.size();
  if (n < 50) throw DataError("too_few_samples", "normalization fit needs at least 50 spacings");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  double h;
  if (bin_width) {
    if (!(*bin_width > 0.0)) throw UsageError("invalid_bin_width", "bin width must be positive");
    h = *bin_width;
  } else {
    auto quantile = [&](double q) {
      const double pos = q * static_cast<double>(n - 1);
      const auto i = static_cast<std::size_t>(pos);
      const double f = pos - static_cast<double>(i);
      return i + 1 < n ? x[i] * (1 - f) + x[i + 1] * f : x[i];
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    h = 2.0 * iqr / std::cbrt(static_cast<double>(n));
    if (!(h > 0.0)) throw DataError("degenerate_sample", "spacings have zero interquartile range");
  }
  const auto bins = static_cast<std::size_t>(std::floor(x.back() / h)) + 1;
  std::vector<double> counts(bins, 0.0);
  for (double v : x) counts[std::min(static_cast<std::size_t>(std::max(v, 0.0) / h), bins - 1)] += 1.0;
  std::size_t first = 0;
  while (first < bins && counts[first] == 0.0) ++first;
  NormalizationFit fit;
  fit.bin_width = h;
  double sp = 0.0, spp = 0.0;
  for (std::size_t k = first; k < bins; ++k) {
    const double c = (static_cast<double>(k) + 0.5) * h;
    const double p = wigner_pdf(c, e);
    if (!(p > 0.0)) continue;
    const double dens = counts[k] / (static_cast<double>(n) * h);
    fit.centers.push_back(c);
    fit.density.push_back(dens);
    fit.model.push_back(p);
    sp += dens * p;
    spp += p * p;
  }
  if (fit.centers.size() < 2 || !(spp > 0.0)) throw DataError("degenerate_sample", "too few usable histogram bins");
  fit.beta = sp / spp;
  double ssr = 0.0;
  for (std::size_t k = 0; k < fit.centers.size(); ++k) {
    const double r = fit.density[k] - fit.beta * fit.model[k];
    ssr += r * r;
  }
  fit.stderr_beta = std::sqrt(ssr / static_cast<double>(fit.centers.size() - 1) / spp);
  return fit;
}

/// y(r)^2 + y'(r) * (1/2 - Si(pi r) / pi), y(r) = sin(pi r) / (pi r).
inline double goe_two_point_cluster(double r) {
  constexpr double pi = std::numbers::pi;
  r = std::abs(r);
  double y, dy;
  if (r < 1e-4) {
    const double z = pi * r;
    y = 1.0 - z * z / 6.0;
    dy = -pi * z / 3.0;
  } else {
    const double z = pi * r;
    y = std::sin(z) / z;
    dy = (z * std::cos(z) - std::sin(z)) / (pi * r * r);
  }
  return y * y + dy * (0.5 - sine_integral(pi * r) / pi);
}

/// Sigma^2(l) = l - 2 int_0^l (l - r) Y2(r) dr, integrated piecewise over
/// unit intervals with adaptive Gauss-Kronrod (absolute tolerance 1e-8).
inline double goe_number_variance_theory(double ell) {
  if (ell < 0.0) throw UsageError("invalid_ell", "window length must be non-negative");
  if (ell == 0.0) return 0.0;
  auto f = [ell](double r) { return (ell - r) * goe_two_point_cluster(r); };
  const int pieces = static_cast<int>(std::ceil(ell));
  double s = 0.0;
  for (int k = 0; k < pieces; ++k) {
    const double a = k, b = std::min(ell, k + 1.0);
    s += integrate(f, a, b, 1e-8 / pieces);
  }
  return ell - 2.0 * s;
}

enum class WindowCentering { Uniform, Eigenvalues };
enum class CountMean { Empirical, Ell };

struct NumberVarianceOptions {
  double trim = 0.1;  // fraction of unfolded values dropped at each end
  WindowCentering centering = WindowCentering::Uniform;
  CountMean mean = CountMean::Empirical;
  std::size_t uniform_centers = 0;  // 0: as many as bulk eigenvalues
};

struct NumberVarianceCurve {
  std::vector<double> ells;
  std::vector<double> empirical;        // variance about the selected mean
  std::vector<double> about_empirical;  // variance about the sample mean of n
  std::vector<double> about_ell;        // variance about the ideal mean ell
  std::vector<double> mean_count;
  std::vector<std::size_t> windows;
  std::vector<double> theory_goe;
  std::vector<double> poisson;
  std::vector<std::string> warnings;
};

/// Sigma^2(l) from counts in half-open windows [c - l/2, c + l/2) that lie
/// inside the trimmed bulk. Window centres are either evenly spaced over the
/// bulk or the bulk unfolded values themselves.
inline NumberVarianceCurve number_variance(std::span<const double> xi_in, std::span<const double> ells,
                                           const NumberVarianceOptions& opt = {}) {
  std::vector<double> xi(xi_in.begin(), xi_in.end());
  std::sort(xi.begin(), xi.end());
  const std::size_t n = xi.size();
  if (n < 50) throw DataError("too_few_eigenvalues", "number variance needs at least 50 unfolded values");
  const std::vector<double> bulk = trim_edges(xi, opt.trim);
  const double lo = bulk.front(), hi = bulk.back();
  const double max_ell = (xi.back() - xi.front()) / 4.0;

  NumberVarianceCurve out;
  for (double ell : ells) {
    if (!(ell >= 0.0)) throw UsageError("invalid_ell", "window lengths must be non-negative");
    if (ell > max_ell) {
      out.warnings.push_back("l=" + std::to_string(ell) + " exceeds a quarter of the unfolded range; omitted");
      continue;
    }
    std::vector<double> centers;
    const double a = lo + 0.5 * ell, b = hi - 0.5 * ell;
    if (opt.centering == WindowCentering::Uniform) {
      const std::size_t k = opt.uniform_centers > 0 ? opt.uniform_centers : bulk.size();
      if (b >= a)
        for (std::size_t j = 0; j < k; ++j)
          centers.push_back(k == 1 ? 0.5 * (a + b) : a + (b - a) * static_cast<double>(j) / static_cast<double>(k - 1));
    } else {
      for (double c : bulk)
        if (c >= a && c <= b) centers.push_back(c);
    }
    if (centers.size() < 2) {
      out.warnings.push_back("l=" + std::to_string(ell) + " leaves fewer than two windows in the bulk; omitted");
      continue;
    }
    std::vector<double> counts(centers.size());
    for (std::size_t j = 0; j < centers.size(); ++j) {
      const auto first = std::lower_bound(xi.begin(), xi.end(), centers[j] - 0.5 * ell);
      const auto last = std::lower_bound(xi.begin(), xi.end(), centers[j] + 0.5 * ell);
      counts[j] = static_cast<double>(last - first);
    }
    double mean = 0.0;
    for (double c : counts) mean += c;
    mean /= static_cast<double>(counts.size());
    double v_emp = 0.0, v_ell = 0.0;
    for (double c : counts) {
      v_emp += (c - mean) * (c - mean);
      v_ell += (c - ell) * (c - ell);
    }
    v_emp /= static_cast<double>(counts.size());
    v_ell /= static_cast<double>(counts.size());
    out.ells.push_back(ell);
    out.about_empirical.push_back(v_emp);
    out.about_ell.push_back(v_ell);
    out.empirical.push_back(opt.mean == CountMean::Empirical ? v_emp : v_ell);
    out.mean_count.push_back(mean);
    out.windows.push_back(counts.size());
    out.theory_goe.push_back(goe_number_variance_theory(ell));
    out.poisson.push_back(ell);
  }
  return out;
}

}  // namespace rmtvol
