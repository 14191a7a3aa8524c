#pragma once

// Unfolding by Gaussian broadening: each eigenvalue's delta peak is replaced
// by a Gaussian whose width follows the local mean spacing, and the smoothed
// counting function maps eigenvalues onto a spectrum of unit mean spacing.

#include "rmtvol/core.hpp"
#include "rmtvol/special.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

namespace rmtvol {

struct UnfoldingParams {
  double w = 0.0;          // sub-band width; <= 0 selects (lambda_max - lambda_min) / 4
  double c = 5.0;          // broadening relative to the local spacing
  double eta_scale = 2.0;  // 2 for the whole spectrum, 1 for the even/odd subsets
};

struct UnfoldedSpectrum {
  std::vector<double> xi;      // ascending
  std::vector<double> source;  // the eigenvalues that were unfolded
  std::vector<double> eta;     // Gaussian width used for each eigenvalue
  UnfoldingParams params;      // with w resolved
  std::vector<double> band_spacing;  // d_m per band, after fallback
};

namespace detail {

inline std::vector<double> band_spacings(std::span<const double> lambda, double lo, double w, std::size_t bands) {
  std::vector<double> first(bands, 0.0), last(bands, 0.0);
  std::vector<std::size_t> count(bands, 0);
  for (double x : lambda) {
    const std::size_t m = std::min(static_cast<std::size_t>((x - lo) / w), bands - 1);
    if (count[m] == 0) first[m] = x;
    last[m] = x;
    ++count[m];
  }
  std::vector<double> d(bands, 0.0);
  std::vector<bool> ok(bands, false);
  for (std::size_t m = 0; m < bands; ++m)
    if (count[m] >= 2 && last[m] > first[m]) {
      d[m] = (last[m] - first[m]) / static_cast<double>(count[m] - 1);
      ok[m] = true;
    }
  if (std::none_of(ok.begin(), ok.end(), [](bool b) { return b; }))
    throw DataError("degenerate_spectrum", "no sub-band holds two distinct eigenvalues; choose a wider w");
  // Empty or singleton bands inherit from the nearest populated band (lower
  // band on ties).
  std::vector<double> out(bands);
  for (std::size_t m = 0; m < bands; ++m) {
    if (ok[m]) {
      out[m] = d[m];
      continue;
    }
    for (std::size_t k = 1; k < bands; ++k) {
      if (m >= k && ok[m - k]) {
        out[m] = d[m - k];
        break;
      }
      if (m + k < bands && ok[m + k]) {
        out[m] = d[m + k];
        break;
      }
    }
  }
  return out;
}

}  // namespace detail

/// xi_i = sum_j Phi((lambda_i - lambda_j) / eta_j), eta_j = eta_scale * c * d_m
/// with d_m the mean nearest-neighbour spacing of the sub-band holding
/// lambda_j. Bands of width w start at lambda_min.
inline UnfoldedSpectrum unfold(std::span<const double> eigenvalues, UnfoldingParams params = {}) {
  const std::size_t n = eigenvalues.size();
  if (n < 10) throw DataError("too_few_eigenvalues", "unfolding needs at least 10 eigenvalues");
  if (!std::is_sorted(eigenvalues.begin(), eigenvalues.end()))
    throw UsageError("unsorted_eigenvalues", "eigenvalues must be ascending");
  if (!(params.c > 0.0)) throw UsageError("invalid_unfolding", "c must be positive");
  if (!(params.eta_scale > 0.0)) throw UsageError("invalid_unfolding", "eta scale must be positive");
  const double lo = eigenvalues.front(), hi = eigenvalues.back();
  if (!(hi > lo)) throw DataError("degenerate_spectrum", "all eigenvalues are identical");
  if (!(params.w > 0.0)) params.w = (hi - lo) / 4.0;
  const auto bands = static_cast<std::size_t>(std::max(1.0, std::ceil((hi - lo) / params.w)));

  UnfoldedSpectrum u;
  u.params = params;
  u.source.assign(eigenvalues.begin(), eigenvalues.end());
  u.band_spacing = detail::band_spacings(eigenvalues, lo, params.w, bands);
  u.eta.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t m = std::min(static_cast<std::size_t>((eigenvalues[j] - lo) / params.w), bands - 1);
    u.eta[j] = params.eta_scale * params.c * u.band_spacing[m];
  }
  u.xi.resize(n);
  parallel_for(n, [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += normal_cdf((eigenvalues[i] - eigenvalues[j]) / u.eta[j]);
    u.xi[i] = s;
  });
  return u;
}

/// Splits by zero-based position parity (positions 0, 2, ... and 1, 3, ...)
/// and unfolds each subset on its own with eta_scale = 1.
inline std::pair<UnfoldedSpectrum, UnfoldedSpectrum> unfold_even_odd(std::span<const double> eigenvalues,
                                                                     UnfoldingParams params = {}) {
  if (eigenvalues.size() < 20) throw DataError("too_few_eigenvalues", "even/odd unfolding needs at least 20 eigenvalues");
  std::vector<double> even, odd;
  for (std::size_t i = 0; i < eigenvalues.size(); ++i) (i % 2 == 0 ? even : odd).push_back(eigenvalues[i]);
  params.eta_scale = 1.0;
  return {unfold(even, params), unfold(odd, params)};
}

/// Drops floor(fraction * n) values from each end.
inline std::vector<double> trim_edges(std::span<const double> xi, double fraction) {
  if (!(fraction >= 0.0) || !(fraction < 0.5)) throw UsageError("invalid_trim", "trim fraction must lie in [0, 0.5)");
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(xi.size())));
  return {xi.begin() + static_cast<std::ptrdiff_t>(k), xi.end() - static_cast<std::ptrdiff_t>(k)};
}

}  // namespace rmtvol
