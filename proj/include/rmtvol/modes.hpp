#pragma once

// Market mode and what is left after removing it: regression on the market
// series, the residual correlation matrix and its rescaling relation to the
// original spectrum, industry weight vectors with inverse participation
// ratios, rank-based Gaussianization and the generalized kurtosis.

#include "rmtvol/core.hpp"
#include "rmtvol/data_ingest.hpp"
#include "rmtvol/goe_stats.hpp"
#include "rmtvol/special.hpp"
#include "rmtvol/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace rmtvol {

/// M_t = sum_i v_i G_{i,t} for an eigenvector scaled to v^T v = N.
inline Vector market_mode_series(const Matrix& panel, const Vector& v) {
  if (v.size() != panel.rows()) throw UsageError("dimension_mismatch", "eigenvector length must equal the panel row count");
  return panel.transpose() * v;
}

struct MarketRegression {
  Vector market;
  Vector alphas;
  Vector betas;
  Matrix residuals;      // epsilon, before normalization
  Vector residual_stds;  // s~_i, population divisor
};

struct MarketModeRemoval {
  MarketRegression regression;
  CorrelationMatrix residual_correlation;
  SpectralDecomposition spectrum;
};

/// Per-asset OLS of each row on {1, M}; the residuals are scaled to unit
/// variance before forming C~ = eps~ eps~^T / T, so C~ has unit diagonal.
inline MarketModeRemoval remove_market_mode(const Matrix& panel, const Vector& market) {
  const Eigen::Index n = panel.rows(), T = panel.cols();
  if (market.size() != T) throw UsageError("dimension_mismatch", "market series length must equal the panel column count");
  if (T < 2) throw DataError("too_few_observations", "regression needs at least 2 observations");
  const double m_mean = market.mean();
  const Vector mc = market.array() - m_mean;
  const double m_var = mc.squaredNorm() / static_cast<double>(T);
  if (!(m_var > 1e-300) || !std::isfinite(m_var))
    throw DataError("degenerate_market", "market series is constant; regression is undefined");

  MarketModeRemoval out;
  auto& reg = out.regression;
  reg.market = market;
  reg.alphas.resize(n);
  reg.betas.resize(n);
  reg.residuals.resize(n, T);
  reg.residual_stds.resize(n);
  Matrix normalized(n, T);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t idx) {
    const auto i = static_cast<Eigen::Index>(idx);
    const double g_mean = panel.row(i).mean();
    const double cov = (panel.row(i).array() - g_mean).matrix().dot(mc) / static_cast<double>(T);
    const double beta = cov / m_var;
    const double alpha = g_mean - beta * m_mean;
    reg.betas[i] = beta;
    reg.alphas[i] = alpha;
    reg.residuals.row(i) = panel.row(i).array() - alpha - beta * market.transpose().array();
    reg.residual_stds[i] = std::sqrt(reg.residuals.row(i).squaredNorm() / static_cast<double>(T));
  });
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(reg.residual_stds[i] > 1e-12))
      throw DataError("zero_residual_variance", "row " + std::to_string(i + 1) + " is fully explained by the market mode");
    normalized.row(i) = reg.residuals.row(i) / reg.residual_stds[i];
  }
  out.residual_correlation = correlation(normalized, CorrelationKind::Residual);
  out.spectrum = eigendecompose(out.residual_correlation);
  return out;
}

/// C~_ij = (C_ij - beta_i beta_j <M^2>) / (s~_i s~_j) for row-normalized
/// panels, where <M^2> = lambda_N N when M is built from the top eigenvector.
inline Matrix reconstruct_residual_correlation(const Matrix& c, const Vector& betas, double market_second_moment,
                                               const Vector& residual_stds) {
  const Eigen::Index n = c.rows();
  if (c.cols() != n || betas.size() != n || residual_stds.size() != n)
    throw UsageError("dimension_mismatch", "C, betas and residual stds must agree in size");
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      out(i, j) = (c(i, j) - betas[i] * betas[j] * market_second_moment) / (residual_stds[i] * residual_stds[j]);
  return out;
}

struct RescalingReport {
  double factor = 1.0;  // (N - lambda_N) / N
  std::vector<double> relative_deviation;
  double median_deviation = 0.0;
  double max_deviation = 0.0;
};

/// Compares lambda~ (N - lambda_N) / N with lambda for the N - 1 non-market
/// eigenvalues: the k-th smallest original eigenvalue pairs with the
/// (k+1)-th smallest residual one, since removal swaps the market eigenvalue
/// for a zero mode.
inline RescalingReport rescaling_check(std::span<const double> original, std::span<const double> residual,
                                       double lambda_n, double n) {
  if (original.size() != residual.size() || original.size() < 2)
    throw UsageError("dimension_mismatch", "spectra must have equal length of at least 2");
  if (!(lambda_n < n)) throw UsageError("invalid_lambda_n", "lambda_N must be smaller than N");
  RescalingReport r;
  r.factor = (n - lambda_n) / n;
  for (std::size_t k = 0; k + 1 < original.size(); ++k) {
    const double pred = residual[k + 1] * r.factor;
    r.relative_deviation.push_back(std::abs(pred - original[k]) / std::abs(original[k]));
  }
  std::vector<double> s = r.relative_deviation;
  std::sort(s.begin(), s.end());
  const std::size_t m = s.size();
  r.median_deviation = m % 2 ? s[m / 2] : 0.5 * (s[m / 2 - 1] + s[m / 2]);
  r.max_deviation = s.back();
  return r;
}

struct WeightVector {
  std::vector<double> rho;  // per industry group, sums to 1
  double gamma = 0.0;
  double ipr = 0.0;         // sum rho_a^4
  std::size_t dominant_group = 0;
};

/// rho_a = gamma * (1/n_a) sum_{i in a} v_i^2, with gamma making sum rho = 1.
inline WeightVector weight_vector(const Vector& v, const IndustryMap& industry) {
  if (static_cast<std::size_t>(v.size()) != industry.asset_count())
    throw UsageError("dimension_mismatch", "eigenvector length must equal the number of mapped assets");
  const std::size_t g = industry.group_count();
  std::vector<double> x(g, 0.0);
  for (std::size_t a = 0; a < g; ++a) {
    const auto& members = industry.groups[a].members;
    if (members.empty()) throw DataError("empty_group", "industry group " + industry.groups[a].code + " has no members");
    double s = 0.0;
    for (std::size_t i : members) s += v[static_cast<Eigen::Index>(i)] * v[static_cast<Eigen::Index>(i)];
    x[a] = s / static_cast<double>(members.size());
  }
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  if (!(total > 0.0)) throw DataError("zero_vector", "eigenvector has no weight");
  WeightVector w;
  w.gamma = 1.0 / total;
  w.rho.resize(g);
  for (std::size_t a = 0; a < g; ++a) {
    w.rho[a] = x[a] / total;
    w.ipr += w.rho[a] * w.rho[a] * w.rho[a] * w.rho[a];
  }
  w.dominant_group = static_cast<std::size_t>(std::max_element(w.rho.begin(), w.rho.end()) - w.rho.begin());
  return w;
}

/// Weight vectors for every eigenvector column.
inline std::vector<WeightVector> weight_vectors(const Matrix& eigenvectors, const IndustryMap& industry) {
  std::vector<WeightVector> out(static_cast<std::size_t>(eigenvectors.cols()));
  for (Eigen::Index k = 0; k < eigenvectors.cols(); ++k)
    out[static_cast<std::size_t>(k)] = weight_vector(eigenvectors.col(k), industry);
  return out;
}

/// IPR of a weight vector spread evenly over `groups` groups: 1 / groups^3.
inline double benchmark_ipr(double groups) {
  if (!(groups > 0.0)) throw UsageError("invalid_groups", "group count must be positive");
  return 1.0 / (groups * groups * groups);
}

/// Number of weight vectors whose IPR exceeds `threshold`, i.e. that are
/// dominated by a few industry groups.
inline std::size_t count_dominated(std::span<const WeightVector> weights, double threshold) {
  return static_cast<std::size_t>(
      std::count_if(weights.begin(), weights.end(), [&](const WeightVector& w) { return w.ipr > threshold; }));
}

struct PowerLawFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  std::size_t n = 0;
};

/// Least-squares line through (ln lambda, ln IPR).
inline PowerLawFit ipr_powerlaw_fit(std::span<const double> eigenvalues, std::span<const double> iprs) {
  if (eigenvalues.size() != iprs.size()) throw UsageError("dimension_mismatch", "eigenvalue and IPR lists differ in length");
  if (eigenvalues.size() < 5) throw DataError("too_few_points", "power-law fit needs at least 5 points");
  const std::size_t n = eigenvalues.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(eigenvalues[i] > 0.0) || !(iprs[i] > 0.0))
      throw DataError("non_positive_value", "power-law fit needs positive eigenvalues and IPRs");
    x[i] = std::log(eigenvalues[i]);
    y[i] = std::log(iprs[i]);
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DataError("degenerate_sample", "eigenvalues are all equal");
  PowerLawFit f;
  f.n = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    ssr += r * r;
  }
  f.stderr_slope = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
  return f;
}

/// Rank-based inverse-normal transform Phi^-1(rank / (T + 1)); tied values
/// share their average rank.
inline std::vector<double> gaussianize(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 10) throw DataError("too_few_observations", "gaussianize needs at least 10 observations");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return series[a] < series[b]; });
  if (series[order.front()] == series[order.back()]) throw DataError("constant_series", "cannot gaussianize a constant series");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && series[order[j + 1]] == series[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    const double z = normal_quantile(rank / static_cast<double>(n + 1));
    for (std::size_t k = i; k <= j; ++k) out[order[k]] = z;
    i = j + 1;
  }
  return out;
}

inline Matrix gaussianize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  parallel_for(static_cast<std::size_t>(m.rows()), [&](std::size_t idx) {
    const auto i = static_cast<Eigen::Index>(idx);
    const Vector row = m.row(i).transpose();
    const auto z = gaussianize(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    for (Eigen::Index t = 0; t < m.cols(); ++t) out(i, t) = z[static_cast<std::size_t>(t)];
  });
  return out;
}

/// How the cross term enters kappa: -2<eM> as printed, or -2<eM>^2.
enum class KurtosisVariant { Literal, SquaredCross };

struct KurtosisReport {
  std::vector<double> kappas;
  double K = 0.0;
  KurtosisVariant variant = KurtosisVariant::Literal;
};

/// kappa_i = <e_i^2 M^2> - <e_i^2><M^2> - 2<e_i M> (or -2<e_i M>^2) on
/// Gaussianized series; K is the mean over assets.
inline KurtosisReport generalized_kurtosis(const Matrix& residuals, const Vector& market,
                                           KurtosisVariant variant = KurtosisVariant::Literal) {
  const Eigen::Index n = residuals.rows(), T = residuals.cols();
  if (market.size() != T) throw UsageError("dimension_mismatch", "market series length must equal the residual column count");
  if (n < 1 || T < 1) throw DataError("empty_panel", "generalized kurtosis needs data");
  const double t = static_cast<double>(T);
  const Vector m2 = market.array().square();
  const double mean_m2 = m2.sum() / t;
  KurtosisReport r;
  r.variant = variant;
  r.kappas.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto e = residuals.row(i).transpose().array();
    const double e2m2 = (e.square() * m2.array()).sum() / t;
    const double e2 = e.square().sum() / t;
    const double em = (e * market.array()).sum() / t;
    const double cross = variant == KurtosisVariant::Literal ? em : em * em;
    r.kappas[static_cast<std::size_t>(i)] = e2m2 - e2 * mean_m2 - 2.0 * cross;
  }
  r.K = std::accumulate(r.kappas.begin(), r.kappas.end(), 0.0) / static_cast<double>(n);
  return r;
}

struct ComponentStats {
  double mean = 0.0;
  double variance = 0.0;
  double excess_kurtosis = 0.0;
  KSResult ks;
  bool gaussian = false;  // KS p-value above 1%
};

/// Moments of the components of an eigenvector (v^T v = N) and their KS
/// distance from the standard normal.
inline ComponentStats eigvec_component_stats(const Vector& v) {
  const auto n = static_cast<double>(v.size());
  ComponentStats s;
  s.mean = v.mean();
  const Eigen::ArrayXd c = v.array() - s.mean;
  s.variance = c.square().sum() / n;
  s.excess_kurtosis = s.variance > 0.0 ? c.pow(4).sum() / n / (s.variance * s.variance) - 3.0
                                       : std::numeric_limits<double>::infinity();
  s.ks = ks_test(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())), normal_cdf);
  s.gaussian = s.ks.p_value > 0.01;
  return s;
}

}  // namespace rmtvol
