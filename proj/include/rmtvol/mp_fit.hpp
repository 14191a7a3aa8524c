#pragma once

// Marchenko-Pastur law for correlation matrices of N uncorrelated series of
// length T (Q = T/N), and the cumulative-distribution fit that separates
// noise eigenvalues from informative ones.

#include "rmtvol/core.hpp"
#include "rmtvol/optimize.hpp"
#include "rmtvol/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace rmtvol {

struct MPParams {
  double Q = 1.0;
  double s0_sq = 1.0;
  double alpha = 1.0;

  bool valid() const { return Q > 0.0 && s0_sq > 0.0 && alpha > 0.0 && alpha <= 1.0; }
};

/// lambda_pm = s0^2 (1 + 1/Q +- 2/sqrt(Q)).
inline std::pair<double, double> mp_bounds(double Q, double s0_sq) {
  if (!(Q > 0.0) || !(s0_sq > 0.0)) throw UsageError("invalid_mp_params", "Q and s0^2 must be positive");
  const double r = 1.0 / std::sqrt(Q);
  return {s0_sq * (1.0 - r) * (1.0 - r), s0_sq * (1.0 + r) * (1.0 + r)};
}

/// Continuous part of the density, zero outside [lambda_-, lambda_+]. For
/// Q < 1 it carries mass Q; the remaining 1 - Q sits at lambda = 0.
inline double mp_density(double lambda, double Q, double s0_sq) {
  const auto [lo, hi] = mp_bounds(Q, s0_sq);
  if (!(lambda > lo) || !(lambda < hi) || lambda <= 0.0) return 0.0;
  return Q / (2.0 * std::numbers::pi * s0_sq) * std::sqrt((hi - lambda) * (lambda - lo)) / lambda;
}

/// F(lambda_i) = #{lambda_j <= lambda_i} / N for ascending input, so ties
/// share the upper value and the last entry is 1.
inline std::vector<double> empirical_cdf(std::span<const double> ascending) {
  const std::size_t n = ascending.size();
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && ascending[j + 1] <= ascending[i]) ++j;
    for (std::size_t k = i; k <= j; ++k) f[k] = static_cast<double>(j + 1) / static_cast<double>(n);
    i = j + 1;
  }
  return f;
}

namespace detail {

/// d/dtheta of the continuous CDF under lambda = lo + (hi - lo) sin^2 theta.
inline double mp_theta_integrand(double theta, double Q, double s0_sq, double lo, double hi) {
  const double s = std::sin(theta), c = std::cos(theta);
  const double w = hi - lo;
  const double lambda = lo + w * s * s;
  if (lambda <= 0.0) return Q / (2.0 * std::numbers::pi * s0_sq) * 2.0 * w * c * c;  // lo == 0 limit
  return Q / (2.0 * std::numbers::pi * s0_sq) * w * w * 2.0 * s * s * c * c / lambda;
}

inline double mp_theta_of(double lambda, double lo, double hi) {
  const double u = std::clamp((lambda - lo) / (hi - lo), 0.0, 1.0);
  return std::asin(std::sqrt(u));
}

}  // namespace detail

/// alpha times the MP cumulative distribution, by adaptive Gauss-Kronrod
/// quadrature in the sine-squared substitution (absolute tolerance 1e-10).
inline double mp_cdf(double lambda, const MPParams& p) {
  if (!p.valid()) throw UsageError("invalid_mp_params", "MP parameters need Q > 0, s0^2 > 0, 0 < alpha <= 1");
  const auto [lo, hi] = mp_bounds(p.Q, p.s0_sq);
  const double atom = p.Q < 1.0 ? 1.0 - p.Q : 0.0;
  if (lambda < 0.0) return 0.0;
  if (lambda <= lo) return p.alpha * atom;
  if (lambda >= hi) return p.alpha;
  const double theta = detail::mp_theta_of(lambda, lo, hi);
  auto f = [&](double t) { return detail::mp_theta_integrand(t, p.Q, p.s0_sq, lo, hi); };
  const double v = atom + integrate(f, 0.0, theta, 1e-10);
  return p.alpha * std::clamp(v, 0.0, 1.0);
}

/// Tabulated unit-scale MP CDF G_Q(x), x = lambda / s0^2, with cubic Hermite
/// interpolation in theta using exact derivatives. Used by the fit, where
/// the CDF is evaluated many thousands of times at fixed Q.
class MPCdfTable {
 public:
  explicit MPCdfTable(double Q, int nodes = 1024) : Q_(Q) {
    std::tie(lo_, hi_) = mp_bounds(Q, 1.0);
    atom_ = Q < 1.0 ? 1.0 - Q : 0.0;
    h_ = (std::numbers::pi / 2) / nodes;
    value_.resize(static_cast<std::size_t>(nodes) + 1);
    slope_.resize(value_.size());
    auto f = [&](double t) { return detail::mp_theta_integrand(t, Q_, 1.0, lo_, hi_); };
    double acc = atom_;
    for (std::size_t k = 0; k < value_.size(); ++k) {
      const double t = h_ * static_cast<double>(k);
      if (k > 0) acc += integrate(f, t - h_, t, 1e-13);
      value_[k] = acc;
      slope_[k] = f(t);
    }
  }

  double Q() const { return Q_; }

  /// G_Q(x) without the alpha factor.
  double operator()(double x) const {
    if (x < 0.0) return 0.0;
    if (x <= lo_) return atom_;
    if (x >= hi_) return 1.0;
    const double theta = detail::mp_theta_of(x, lo_, hi_);
    std::size_t k = std::min(static_cast<std::size_t>(theta / h_), value_.size() - 2);
    const double t = (theta - h_ * static_cast<double>(k)) / h_;
    const double t2 = t * t, t3 = t2 * t;
    const double v = (2 * t3 - 3 * t2 + 1) * value_[k] + (t3 - 2 * t2 + t) * h_ * slope_[k] +
                     (-2 * t3 + 3 * t2) * value_[k + 1] + (t3 - t2) * h_ * slope_[k + 1];
    return std::clamp(v, 0.0, 1.0);
  }

  /// dG/dx, the unit-scale density.
  double density(double x) const { return mp_density(x, Q_, 1.0); }

 private:
  double Q_, lo_ = 0, hi_ = 0, atom_ = 0, h_ = 0;
  std::vector<double> value_, slope_;
};

struct MPFitOptions {
  int scan_min = 0;  // 0 selects the default floor
  int scan_max = 0;  // 0 selects N
  int smoothing_window = 5;
};

struct MPFitResult {
  MPParams params;
  double s0_sq_stderr = 0.0;
  double alpha_stderr = 0.0;
  int N1 = 0;
  int N0 = 0;
  double lambda_minus = 0.0;
  double lambda_plus = 0.0;
  double rmse = 0.0;
  std::vector<int> scan;                // N1 values
  std::vector<double> rmse_curve;       // E(N1)
  std::vector<double> smoothed_curve;   // centred moving average of E
  std::vector<double> scan_alpha;       // fitted alpha per N1
  std::vector<double> scan_s0_sq;       // fitted s0^2 per N1
  std::vector<std::string> warnings;
};

/// Lowest N1 of the default scan.
inline int default_scan_floor(int n) { return std::max(20, n / 4); }

namespace detail {

struct MPPointFit {
  double alpha = 1.0, s0_sq = 1.0, rmse = 0.0;
};

inline double bounded(double u, double upper) { return upper / (1.0 + std::exp(-u)); }
inline double unbounded(double v, double upper) { return std::log(v / (upper - v)); }

inline MPPointFit fit_mp_prefix(const MPCdfTable& table, std::span<const double> lambda, std::span<const double> f,
                                int n1) {
  const auto m = static_cast<std::size_t>(n1);
  auto mse = [&](double alpha, double s0) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double r = f[i] - alpha * table(lambda[i] / s0);
      s += r * r;
    }
    return s / static_cast<double>(m);
  };
  // log(MSE) keeps the objective scale-free, so gradient tolerances mean the
  // same thing for every N1.
  const Objective obj = [&](const Vector& u) {
    return std::log(mse(bounded(u[1], 1.0), bounded(u[0], 2.0)) + 1e-300);
  };
  double mean = 0.0;
  for (std::size_t i = 0; i < m; ++i) mean += lambda[i];
  mean /= static_cast<double>(m);
  const double ref = std::clamp(mean, 1e-8, 1.0);
  MPPointFit best;
  double best_f = std::numeric_limits<double>::infinity();
  for (double sf : {0.5, 1.0, 1.9}) {
    for (double a : {0.3, 0.65, 0.97}) {
      const double s0 = std::clamp(sf * ref, 1e-9, 1.99);
      Vector u(2);
      u << unbounded(s0, 2.0), unbounded(a, 1.0);
      const BfgsResult r = minimize_bfgs(obj, u);
      if (r.f < best_f) {
        best_f = r.f;
        best.s0_sq = bounded(r.x[0], 2.0);
        best.alpha = bounded(r.x[1], 1.0);
      }
    }
  }
  best.rmse = std::sqrt(mse(best.alpha, best.s0_sq));
  return best;
}

inline std::vector<double> moving_average(const std::vector<double>& v, int window) {
  const int half = std::max(0, window / 2);
  const int n = static_cast<int>(v.size());
  std::vector<double> out(v.size());
  for (int i = 0; i < n; ++i) {
    const int a = std::max(0, i - half), b = std::min(n - 1, i + half);
    double s = 0.0;
    for (int j = a; j <= b; ++j) s += v[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = s / (b - a + 1);
  }
  return out;
}

}  // namespace detail

/// Scans N1 over the requested range; for each N1 fits alpha and s0^2 to the
/// N1 smallest eigenvalues by minimising the RMSE between the empirical CDF
/// and alpha * F_MP. The selected N1 minimises the smoothed E(N1) curve.
inline MPFitResult fit_mp(std::span<const double> eigenvalues, double Q, const MPFitOptions& opt = {}) {
  const int n = static_cast<int>(eigenvalues.size());
  if (n < 50) throw DataError("too_few_eigenvalues", "MP fit needs at least 50 eigenvalues");
  if (!(Q > 0.0)) throw UsageError("invalid_mp_params", "Q must be positive");
  std::vector<double> lambda(eigenvalues.begin(), eigenvalues.end());
  if (!std::is_sorted(lambda.begin(), lambda.end()))
    throw UsageError("unsorted_eigenvalues", "eigenvalues must be ascending");
  if (!(lambda.back() - lambda.front() > 1e-12 * std::max(1.0, std::abs(lambda.back()))))
    throw DataError("degenerate_spectrum", "all eigenvalues are equal; MP fit is undefined");
  const int lo = opt.scan_min > 0 ? opt.scan_min : default_scan_floor(n);
  const int hi = opt.scan_max > 0 ? opt.scan_max : n;
  if (lo < 20 || hi > n || lo > hi)
    throw UsageError("invalid_scan_range", "N1 scan range must lie within [20, N]");
  if (opt.smoothing_window < 1) throw UsageError("invalid_window", "smoothing window must be positive");

  const std::vector<double> f = empirical_cdf(lambda);
  const MPCdfTable table(Q);
  MPFitResult res;
  const auto count = static_cast<std::size_t>(hi - lo + 1);
  std::vector<detail::MPPointFit> fits(count);
  parallel_for(count, [&](std::size_t k) { fits[k] = detail::fit_mp_prefix(table, lambda, f, lo + static_cast<int>(k)); });
  for (std::size_t k = 0; k < count; ++k) {
    res.scan.push_back(lo + static_cast<int>(k));
    res.rmse_curve.push_back(fits[k].rmse);
    res.scan_alpha.push_back(fits[k].alpha);
    res.scan_s0_sq.push_back(fits[k].s0_sq);
  }
  res.smoothed_curve = detail::moving_average(res.rmse_curve, opt.smoothing_window);
  const auto best = static_cast<std::size_t>(
      std::min_element(res.smoothed_curve.begin(), res.smoothed_curve.end()) - res.smoothed_curve.begin());
  if (count > 1 && (best == 0 || best + 1 == count))
    res.warnings.push_back("no interior minimum of E(N1); using scan endpoint N1=" + std::to_string(res.scan[best]));

  res.N1 = res.scan[best];
  res.params = {Q, fits[best].s0_sq, fits[best].alpha};
  res.rmse = fits[best].rmse;
  std::tie(res.lambda_minus, res.lambda_plus) = mp_bounds(Q, res.params.s0_sq);
  res.N0 = static_cast<int>(std::upper_bound(lambda.begin(), lambda.end(), res.lambda_plus) - lambda.begin());
  if (res.params.alpha > 1.0 - 1e-6) res.warnings.push_back("alpha at its upper bound 1");
  if (res.params.s0_sq > 2.0 - 1e-6) res.warnings.push_back("s0^2 at its upper bound 2");

  // Nonlinear least-squares covariance sigma^2 (J^T J)^-1 at the optimum.
  const double a = res.params.alpha, s = res.params.s0_sq;
  Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
  double ssr = 0.0;
  for (int i = 0; i < res.N1; ++i) {
    const double x = lambda[static_cast<std::size_t>(i)] / s;
    const double g = table(x);
    const double da = g;
    const double ds = -a * table.density(x) * x / s;
    jtj(0, 0) += da * da;
    jtj(0, 1) += da * ds;
    jtj(1, 1) += ds * ds;
    const double r = f[static_cast<std::size_t>(i)] - a * g;
    ssr += r * r;
  }
  jtj(1, 0) = jtj(0, 1);
  const double det = jtj.determinant();
  if (res.N1 > 2 && det > 0.0) {
    const Eigen::Matrix2d cov = ssr / (res.N1 - 2) * jtj.inverse();
    res.alpha_stderr = std::sqrt(std::max(0.0, cov(0, 0)));
    res.s0_sq_stderr = std::sqrt(std::max(0.0, cov(1, 1)));
  } else {
    res.alpha_stderr = res.s0_sq_stderr = std::numeric_limits<double>::quiet_NaN();
  }
  return res;
}

/// s0^2 ~ 1 - (1/N) sum_{i > N0} lambda_i for an ascending spectrum.
inline double effective_variance(std::span<const double> ascending, int N0) {
  const int n = static_cast<int>(ascending.size());
  if (N0 <= 0 || N0 > n) throw UsageError("invalid_n0", "N0 must satisfy 0 < N0 <= N");
  double s = 0.0;
  for (int i = N0; i < n; ++i) s += ascending[static_cast<std::size_t>(i)];
  return 1.0 - s / n;
}

}  // namespace rmtvol
