#pragma once

// GARCH(1,1), pooled GARCH(1,1) and ARMA(p,q)-GARCH(1,1) by constrained
// maximum likelihood, plus a seeded simulator.
//
// Conventions. The first conditional variance is sigma0_sq (the sample
// variance of the series unless overridden); afterwards
//   sigma2[t] = alpha0 + alpha1 * a[t-1]^2 + beta1 * sigma2[t-1],
// where a is the return itself (pure GARCH) or the ARMA residual. The
// optimiser works in an unconstrained space:
//   u0 = ln alpha0, u1 = logit(alpha1 + beta1), u2 = logit(alpha1 / (alpha1 + beta1)),
//   u3 = ln(nu - 2)   (Student-t only),
// which keeps alpha0 > 0, alpha1, beta1 >= 0 and alpha1 + beta1 < 1.

#include "rmtvol/core.hpp"
#include "rmtvol/optimize.hpp"
#include "rmtvol/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rmtvol {

struct GarchParams {
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  double beta1 = 0.0;

  double persistence() const { return alpha1 + beta1; }
  bool valid() const {
    return alpha0 > 0.0 && alpha1 >= 0.0 && beta1 >= 0.0 && persistence() < 1.0 && std::isfinite(alpha0);
  }
  double unconditional_variance() const { return alpha0 / (1.0 - persistence()); }
};

enum class Innovation { Gaussian, StudentT };

/// Innovation law; Student-t is rescaled to unit variance and needs nu > 2.
struct InnovationDist {
  Innovation kind = Innovation::Gaussian;
  double nu = 8.0;

  static InnovationDist gaussian() { return {Innovation::Gaussian, 0.0}; }
  static InnovationDist student_t(double nu) { return {Innovation::StudentT, nu}; }
  bool valid() const { return kind == Innovation::Gaussian || nu > 2.0; }
};

struct ArmaOrder {
  int p = 0;
  int q = 0;
  friend bool operator==(const ArmaOrder&, const ArmaOrder&) = default;
};

struct ArmaCoeffs {
  double phi0 = 0.0;
  std::vector<double> phi;    // AR coefficients, lag 1..p
  std::vector<double> theta;  // MA coefficients, lag 1..q
};

struct GarchFit {
  GarchParams params;
  std::optional<ArmaCoeffs> arma;
  InnovationDist dist;
  double loglik = -std::numeric_limits<double>::infinity();
  double bic = std::numeric_limits<double>::infinity();
  std::vector<std::string> names;  // parameter names, aligned with estimates/stderrs
  std::vector<double> estimates;
  std::vector<double> stderrs;     // NaN where the Hessian is not usable
  std::vector<double> sigma;       // filtered conditional volatility
  double sigma0_sq = 0.0;
  std::size_t observations = 0;
  int iterations = 0;
  bool converged = false;
  bool boundary = false;  // an inequality constraint is (nearly) active

  double stderr_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return stderrs[i];
    return std::numeric_limits<double>::quiet_NaN();
  }
};

struct GarchOptions {
  std::size_t min_observations = 100;
  std::optional<double> sigma0_sq;  // default: sample variance of the series
  BfgsOptions bfgs{};
  double hessian_step = 1e-4;
};

namespace detail {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double sample_variance(std::span<const double> r) {
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(r.size());
  double s = 0.0;
  for (double v : r) s += (v - mean) * (v - mean);
  return s / static_cast<double>(r.size());
}

inline double sample_mean(std::span<const double> r) {
  double mean = 0.0;
  for (double v : r) mean += v;
  return mean / static_cast<double>(r.size());
}

/// Log density constant for the standardized Student-t.
inline double t_log_constant(double nu) {
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(std::numbers::pi * (nu - 2.0));
}

inline double log_density(double a, double sigma2, const InnovationDist& dist, double t_const) {
  if (dist.kind == Innovation::Gaussian)
    return -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * std::log(sigma2) - 0.5 * a * a / sigma2;
  return t_const - 0.5 * std::log(sigma2) -
         0.5 * (dist.nu + 1.0) * std::log1p(a * a / ((dist.nu - 2.0) * sigma2));
}

/// ARMA residuals with pre-sample observations at the sample mean and
/// pre-sample residuals at zero.
inline void arma_residuals(std::span<const double> r, const ArmaCoeffs& c, double presample, std::vector<double>& a) {
  const std::size_t n = r.size();
  a.resize(n);
  const std::size_t p = c.phi.size(), q = c.theta.size();
  for (std::size_t t = 0; t < n; ++t) {
    double v = r[t] - c.phi0;
    for (std::size_t j = 1; j <= p; ++j) v -= c.phi[j - 1] * (t >= j ? r[t - j] : presample);
    for (std::size_t k = 1; k <= q; ++k) v -= c.theta[k - 1] * (t >= k ? a[t - k] : 0.0);
    a[t] = v;
  }
}

/// Sum of log densities along the variance recursion; -inf when the path
/// degenerates. Optionally stores the volatility path.
inline double garch_loglik(std::span<const double> a, const GarchParams& g, const InnovationDist& dist,
                           double sigma0_sq, std::vector<double>* sigma) {
  const double t_const = dist.kind == Innovation::StudentT ? t_log_constant(dist.nu) : 0.0;
  if (sigma) sigma->resize(a.size());
  double s2 = sigma0_sq;
  double ll = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (t > 0) s2 = g.alpha0 + g.alpha1 * a[t - 1] * a[t - 1] + g.beta1 * s2;
    if (!(s2 > 0.0) || !std::isfinite(s2)) return -std::numeric_limits<double>::infinity();
    ll += log_density(a[t], s2, dist, t_const);
    if (sigma) (*sigma)[t] = std::sqrt(s2);
  }
  return std::isfinite(ll) ? ll : -std::numeric_limits<double>::infinity();
}

/// Layout of the optimiser vector: [phi0, phi..., theta...] (ARMA only),
/// then u0, u1, u2 and, for Student-t, u3.
struct Layout {
  bool mean = false;
  int p = 0;
  int q = 0;
  bool student = false;

  Eigen::Index arma_size() const { return mean ? 1 + p + q : 0; }
  Eigen::Index garch_offset() const { return arma_size(); }
  Eigen::Index size() const { return arma_size() + 3 + (student ? 1 : 0); }
};

inline GarchParams garch_from_u(const Vector& u, Eigen::Index off) {
  const double p = logistic(u[off + 1]);
  const double s = logistic(u[off + 2]);
  return {std::exp(u[off]), p * s, p * (1.0 - s)};
}

inline void garch_to_u(const GarchParams& g, Vector& u, Eigen::Index off) {
  const double p = std::clamp(g.persistence(), 1e-8, 1.0 - 1e-8);
  const double s = std::clamp(g.persistence() > 0 ? g.alpha1 / g.persistence() : 0.5, 1e-8, 1.0 - 1e-8);
  u[off] = std::log(g.alpha0);
  u[off + 1] = logit(p);
  u[off + 2] = logit(s);
}

inline ArmaCoeffs arma_from_u(const Vector& u, const Layout& l) {
  ArmaCoeffs c;
  if (!l.mean) return c;
  c.phi0 = u[0];
  for (int j = 0; j < l.p; ++j) c.phi.push_back(u[1 + j]);
  for (int k = 0; k < l.q; ++k) c.theta.push_back(u[1 + l.p + k]);
  return c;
}

inline double nu_from_u(const Vector& u, const Layout& l) { return 2.0 + std::exp(u[l.garch_offset() + 3]); }

/// Natural-scale parameters and the Jacobian d(natural)/d(u).
inline void natural_parameters(const Vector& u, const Layout& l, Vector& theta, Matrix& jac,
                               std::vector<std::string>& names) {
  const Eigen::Index n = l.size();
  theta.resize(n);
  jac = Matrix::Zero(n, n);
  names.clear();
  for (Eigen::Index i = 0; i < l.arma_size(); ++i) {
    theta[i] = u[i];
    jac(i, i) = 1.0;
  }
  if (l.mean) {
    names.push_back("phi0");
    for (int j = 1; j <= l.p; ++j) names.push_back("phi" + std::to_string(j));
    for (int k = 1; k <= l.q; ++k) names.push_back("theta" + std::to_string(k));
  }
  const Eigen::Index o = l.garch_offset();
  const double a0 = std::exp(u[o]);
  const double p = logistic(u[o + 1]);
  const double s = logistic(u[o + 2]);
  const double dp = p * (1.0 - p), ds = s * (1.0 - s);
  theta[o] = a0;
  theta[o + 1] = p * s;
  theta[o + 2] = p * (1.0 - s);
  jac(o, o) = a0;
  jac(o + 1, o + 1) = s * dp;
  jac(o + 1, o + 2) = p * ds;
  jac(o + 2, o + 1) = (1.0 - s) * dp;
  jac(o + 2, o + 2) = -p * ds;
  names.insert(names.end(), {"alpha0", "alpha1", "beta1"});
  if (l.student) {
    const double e = std::exp(u[o + 3]);
    theta[o + 3] = 2.0 + e;
    jac(o + 3, o + 3) = e;
    names.push_back("nu");
  }
}

/// Total log-likelihood of one or more series under a shared parameter
/// vector. Per-series terms are summed in index order.
struct LikelihoodProblem {
  std::vector<std::span<const double>> series;
  std::vector<double> sigma0_sq;
  std::vector<double> presample;
  Layout layout;
  double fixed_nu = 8.0;

  double loglik(const Vector& u, std::vector<std::vector<double>>* sigmas = nullptr) const {
    const GarchParams g = garch_from_u(u, layout.garch_offset());
    InnovationDist dist = layout.student ? InnovationDist::student_t(nu_from_u(u, layout))
                                         : InnovationDist::gaussian();
    if (!std::isfinite(g.alpha0) || !(g.alpha0 > 0.0) || !dist.valid()) return -std::numeric_limits<double>::infinity();
    const ArmaCoeffs c = arma_from_u(u, layout);
    std::vector<double> terms(series.size());
    if (sigmas) sigmas->resize(series.size());
    auto one = [&](std::size_t i) {
      std::vector<double> a;
      std::span<const double> resid = series[i];
      if (layout.mean) {
        arma_residuals(series[i], c, presample[i], a);
        resid = a;
      }
      terms[i] = garch_loglik(resid, g, dist, sigma0_sq[i], sigmas ? &(*sigmas)[i] : nullptr);
    };
    if (series.size() > 1 && !sigmas)
      parallel_for(series.size(), one);
    else
      for (std::size_t i = 0; i < series.size(); ++i) one(i);
    double total = 0.0;
    for (double t : terms) total += t;
    return total;
  }
};

inline std::vector<GarchParams> garch_starts(double variance) {
  std::vector<GarchParams> out;
  for (auto [p, s] : {std::pair{0.90, 0.10}, std::pair{0.97, 0.05}, std::pair{0.60, 0.30}})
    out.push_back({variance * (1.0 - p), p * s, p * (1.0 - s)});
  return out;
}

inline GarchFit finish_fit(const LikelihoodProblem& prob, const BfgsResult& best, const GarchOptions& opt,
                           std::size_t total_obs) {
  const Layout& l = prob.layout;
  GarchFit fit;
  fit.loglik = -best.f;
  fit.iterations = best.iterations;
  fit.converged = best.converged;
  fit.observations = total_obs;
  fit.params = garch_from_u(best.x, l.garch_offset());
  fit.dist = l.student ? InnovationDist::student_t(nu_from_u(best.x, l)) : InnovationDist::gaussian();
  if (l.mean) fit.arma = arma_from_u(best.x, l);

  Vector theta;
  Matrix jac;
  natural_parameters(best.x, l, theta, jac, fit.names);
  fit.estimates.assign(theta.data(), theta.data() + theta.size());

  const Objective neg = [&](const Vector& u) { return -prob.loglik(u); };
  const Matrix hess = numerical_hessian(neg, best.x, opt.hessian_step);
  fit.stderrs.assign(static_cast<std::size_t>(theta.size()), std::numeric_limits<double>::quiet_NaN());
  Eigen::LDLT<Matrix> ldlt(hess);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && hess.allFinite()) {
    const Matrix cov_u = ldlt.solve(Matrix::Identity(hess.rows(), hess.cols()));
    const Matrix cov = jac * cov_u * jac.transpose();
    for (Eigen::Index i = 0; i < cov.rows(); ++i)
      if (cov(i, i) >= 0.0) fit.stderrs[static_cast<std::size_t>(i)] = std::sqrt(cov(i, i));
  }

  const Eigen::Index o = l.garch_offset();
  const double p = logistic(best.x[o + 1]);
  const double s = logistic(best.x[o + 2]);
  fit.boundary = p > 1.0 - 1e-6 || s < 1e-4 || s > 1.0 - 1e-4 || p < 1e-6;
  const double k = static_cast<double>(l.size());
  fit.bic = -2.0 * fit.loglik + k * std::log(static_cast<double>(total_obs));
  return fit;
}

inline BfgsResult best_of_starts(const LikelihoodProblem& prob, const std::vector<Vector>& starts,
                                 const BfgsOptions& bfgs) {
  const Objective neg = [&](const Vector& u) { return -prob.loglik(u); };
  BfgsResult best;
  for (const auto& s : starts) {
    BfgsResult r = minimize_bfgs(neg, s, bfgs);
    if (!best.x.size() || r.f < best.f || (r.f == best.f && r.converged && !best.converged)) best = std::move(r);
  }
  return best;
}

inline void check_series(std::span<const double> r, const GarchOptions& opt) {
  if (r.size() < opt.min_observations)
    throw DataError("too_few_observations", "GARCH fit needs at least " + std::to_string(opt.min_observations) +
                                                " observations, got " + std::to_string(r.size()));
  bool nonzero = false;
  for (double v : r) {
    if (!std::isfinite(v)) throw DataError("non_finite_return", "return series contains a non-finite value");
    nonzero = nonzero || v != 0.0;
  }
  if (!nonzero) throw DataError("zero_returns", "return series is identically zero");
}

}  // namespace detail

/// Conditional volatility path sigma[t] for the given parameters.
inline std::vector<double> filter_volatility(std::span<const double> returns, const GarchParams& params,
                                             double sigma0_sq) {
  if (!params.valid()) throw UsageError("invalid_garch_params", "GARCH parameters violate alpha0>0, alpha1,beta1>=0, alpha1+beta1<1");
  if (!(sigma0_sq > 0.0)) throw UsageError("invalid_sigma0", "initial variance must be positive");
  std::vector<double> sigma(returns.size());
  double s2 = sigma0_sq;
  for (std::size_t t = 0; t < returns.size(); ++t) {
    if (t > 0) s2 = params.alpha0 + params.alpha1 * returns[t - 1] * returns[t - 1] + params.beta1 * s2;
    sigma[t] = std::sqrt(s2);
  }
  return sigma;
}

/// Sum over t of ln f(r_t; 0, sigma_t) under the innovation law.
inline double log_likelihood(std::span<const double> returns, const GarchParams& params, const InnovationDist& dist,
                             double sigma0_sq) {
  if (!params.valid()) throw UsageError("invalid_garch_params", "GARCH parameters violate the stationarity region");
  if (!dist.valid()) throw UsageError("invalid_dof", "Student-t degrees of freedom must exceed 2");
  if (!(sigma0_sq > 0.0)) throw UsageError("invalid_sigma0", "initial variance must be positive");
  const double ll = detail::garch_loglik(returns, params, dist, sigma0_sq, nullptr);
  if (!std::isfinite(ll)) throw NumericalError("non_finite_likelihood", "log-likelihood is not finite");
  return ll;
}

/// Maximum-likelihood GARCH(1,1) with zero conditional mean. Student-t
/// degrees of freedom are estimated jointly.
inline GarchFit fit_garch(std::span<const double> returns, const InnovationDist& dist = InnovationDist::gaussian(),
                          const GarchOptions& opt = {}) {
  detail::check_series(returns, opt);
  const double var = detail::sample_variance(returns);
  detail::LikelihoodProblem prob;
  prob.series = {returns};
  prob.sigma0_sq = {opt.sigma0_sq.value_or(var)};
  prob.presample = {0.0};
  prob.layout = {false, 0, 0, dist.kind == Innovation::StudentT};
  std::vector<Vector> starts;
  for (const auto& g : detail::garch_starts(var)) {
    Vector u(prob.layout.size());
    detail::garch_to_u(g, u, 0);
    if (prob.layout.student) u[3] = std::log(std::max(dist.nu, 2.5) - 2.0);
    starts.push_back(u);
  }
  const BfgsResult best = detail::best_of_starts(prob, starts, opt.bfgs);
  GarchFit fit = detail::finish_fit(prob, best, opt, returns.size());
  fit.sigma0_sq = prob.sigma0_sq[0];
  std::vector<std::vector<double>> sig;
  prob.loglik(best.x, &sig);
  fit.sigma = std::move(sig[0]);
  return fit;
}

struct PooledGarchFit {
  GarchFit fit;                             // shared parameters; fit.sigma is empty
  std::vector<std::vector<double>> sigmas;  // per-asset volatility paths
  std::vector<double> asset_logliks;        // per-asset terms at the optimum
};

/// One GARCH(1,1) for every row of `returns`, maximising the summed
/// log-likelihood. Each asset starts from its own sample variance.
inline PooledGarchFit fit_pooled_garch(const Matrix& returns, const InnovationDist& dist = InnovationDist::gaussian(),
                                       const GarchOptions& opt = {}) {
  if (returns.rows() < 1) throw DataError("empty_panel", "pooled GARCH needs at least one series");
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(returns.rows()));
  detail::LikelihoodProblem prob;
  prob.layout = {false, 0, 0, dist.kind == Innovation::StudentT};
  double mean_var = 0.0;
  for (Eigen::Index i = 0; i < returns.rows(); ++i) {
    auto& row = rows[static_cast<std::size_t>(i)];
    row.assign(returns.cols(), 0.0);
    for (Eigen::Index t = 0; t < returns.cols(); ++t) row[static_cast<std::size_t>(t)] = returns(i, t);
    detail::check_series(row, opt);
    const double v = detail::sample_variance(row);
    prob.series.emplace_back(row);
    prob.sigma0_sq.push_back(opt.sigma0_sq.value_or(v));
    prob.presample.push_back(0.0);
    mean_var += v;
  }
  mean_var /= static_cast<double>(returns.rows());
  std::vector<Vector> starts;
  for (const auto& g : detail::garch_starts(mean_var)) {
    Vector u(prob.layout.size());
    detail::garch_to_u(g, u, 0);
    if (prob.layout.student) u[3] = std::log(std::max(dist.nu, 2.5) - 2.0);
    starts.push_back(u);
  }
  const BfgsResult best = detail::best_of_starts(prob, starts, opt.bfgs);
  PooledGarchFit out;
  out.fit = detail::finish_fit(prob, best, opt, static_cast<std::size_t>(returns.size()));
  prob.loglik(best.x, &out.sigmas);
  const auto g = out.fit.params;
  for (std::size_t i = 0; i < prob.series.size(); ++i)
    out.asset_logliks.push_back(detail::garch_loglik(prob.series[i], g, out.fit.dist, prob.sigma0_sq[i], nullptr));
  return out;
}

struct ArmaCandidate {
  ArmaOrder order;
  ArmaCoeffs coeffs;
  double loglik = 0.0;
  double bic = 0.0;
};

struct ArmaSelection {
  ArmaOrder order;
  std::vector<ArmaCandidate> candidates;  // every (p, q) on the grid
};

/// Conditional-sum-of-squares Gaussian ARMA fit. The variance is
/// concentrated out: loglik = -T/2 (ln(2 pi SSR / T) + 1).
inline ArmaCandidate fit_arma_css(std::span<const double> r, ArmaOrder order,
                                  const std::vector<Vector>& extra_starts = {}) {
  const detail::Layout l{true, order.p, order.q, false};
  const double presample = detail::sample_mean(r);
  const double n = static_cast<double>(r.size());
  const Objective half_n_log_ssr = [&](const Vector& u) {
    std::vector<double> a;
    detail::arma_residuals(r, detail::arma_from_u(u, l), presample, a);
    double ssr = 0.0;
    for (double v : a) ssr += v * v;
    return 0.5 * n * std::log(ssr / n);
  };
  Vector start = Vector::Zero(l.arma_size());
  start[0] = presample;
  std::vector<Vector> starts{start};
  for (const auto& s : extra_starts)
    if (s.size() == start.size()) starts.push_back(s);
  BfgsOptions bo;
  bo.relative_step = 1e-6;
  BfgsResult best;
  for (const auto& s : starts) {
    BfgsResult res = minimize_bfgs(half_n_log_ssr, s, bo);
    if (!best.x.size() || res.f < best.f) best = std::move(res);
  }
  ArmaCandidate c;
  c.order = order;
  c.coeffs = detail::arma_from_u(best.x, l);
  c.loglik = -best.f - 0.5 * n * (std::log(2.0 * std::numbers::pi) + 1.0);
  c.bic = -2.0 * c.loglik + static_cast<double>(1 + order.p + order.q) * std::log(n);
  return c;
}

/// Grid search over p <= max_p, q <= max_q minimising
/// BIC = -2 loglik + (1 + p + q) ln T. Falls back to (0, 0).
inline ArmaSelection select_arma_order(std::span<const double> returns, int max_p = 5, int max_q = 5) {
  if (max_p < 0 || max_q < 0) throw UsageError("invalid_arma_order", "maximum ARMA orders must be non-negative");
  if (returns.size() < 10) throw DataError("too_few_observations", "ARMA order selection needs at least 10 observations");
  ArmaSelection sel;
  std::vector<std::vector<ArmaCandidate>> grid(static_cast<std::size_t>(max_p + 1));
  auto pad = [](const ArmaCandidate& c, int p, int q) {
    Vector u = Vector::Zero(1 + p + q);
    u[0] = c.coeffs.phi0;
    for (std::size_t j = 0; j < c.coeffs.phi.size(); ++j) u[1 + static_cast<Eigen::Index>(j)] = c.coeffs.phi[j];
    for (std::size_t k = 0; k < c.coeffs.theta.size(); ++k) u[1 + p + static_cast<Eigen::Index>(k)] = c.coeffs.theta[k];
    return u;
  };
  for (int p = 0; p <= max_p; ++p) {
    for (int q = 0; q <= max_q; ++q) {
      std::vector<Vector> starts;
      if (p > 0) starts.push_back(pad(grid[static_cast<std::size_t>(p - 1)][static_cast<std::size_t>(q)], p, q));
      if (q > 0) starts.push_back(pad(grid[static_cast<std::size_t>(p)][static_cast<std::size_t>(q - 1)], p, q));
      grid[static_cast<std::size_t>(p)].push_back(fit_arma_css(returns, {p, q}, starts));
      sel.candidates.push_back(grid[static_cast<std::size_t>(p)].back());
    }
  }
  double best = std::numeric_limits<double>::infinity();
  sel.order = {0, 0};
  for (const auto& c : sel.candidates)
    if (std::isfinite(c.bic) && c.bic < best) {
      best = c.bic;
      sel.order = c.order;
    }
  return sel;
}

/// Joint MLE of ARMA(p,q) mean and GARCH(1,1) variance; residuals of the
/// mean equation drive the variance recursion.
inline GarchFit fit_arma_garch(std::span<const double> returns, ArmaOrder order,
                               const InnovationDist& dist = InnovationDist::gaussian(), const GarchOptions& opt = {}) {
  if (order.p < 0 || order.q < 0) throw UsageError("invalid_arma_order", "ARMA orders must be non-negative");
  detail::check_series(returns, opt);
  const double var = detail::sample_variance(returns);
  detail::LikelihoodProblem prob;
  prob.series = {returns};
  prob.sigma0_sq = {opt.sigma0_sq.value_or(var)};
  prob.presample = {detail::sample_mean(returns)};
  prob.layout = {true, order.p, order.q, dist.kind == Innovation::StudentT};
  const auto& l = prob.layout;
  const Eigen::Index o = l.garch_offset();

  const ArmaCandidate css = fit_arma_css(returns, order);
  std::vector<Vector> starts;
  for (const auto& g : detail::garch_starts(var)) {
    Vector u(l.size());
    u[0] = css.coeffs.phi0;
    for (int j = 0; j < order.p; ++j) u[1 + j] = css.coeffs.phi[static_cast<std::size_t>(j)];
    for (int k = 0; k < order.q; ++k) u[1 + order.p + k] = css.coeffs.theta[static_cast<std::size_t>(k)];
    detail::garch_to_u(g, u, o);
    if (l.student) u[o + 3] = std::log(std::max(dist.nu, 2.5) - 2.0);
    starts.push_back(u);
  }
  // The zero-mean GARCH optimum is a point of this model (phi = theta = 0,
  // phi0 = 0), so starting there guarantees the nested likelihood ordering.
  const GarchFit plain = fit_garch(returns, dist, opt);
  {
    Vector u = Vector::Zero(l.size());
    detail::garch_to_u(plain.params, u, o);
    if (l.student) u[o + 3] = std::log(plain.dist.nu - 2.0);
    starts.push_back(u);
  }
  const BfgsResult best = detail::best_of_starts(prob, starts, opt.bfgs);
  GarchFit fit = detail::finish_fit(prob, best, opt, returns.size());
  fit.sigma0_sq = prob.sigma0_sq[0];
  std::vector<std::vector<double>> sig;
  prob.loglik(best.x, &sig);
  fit.sigma = std::move(sig[0]);
  return fit;
}

struct GarchSimulation {
  std::vector<double> returns;
  std::vector<double> sigma;
};

/// Simulates T observations after a 500-step burn-in started at the
/// unconditional variance. Deterministic for a fixed seed.
inline GarchSimulation simulate_garch(const GarchParams& params, const std::optional<ArmaCoeffs>& arma,
                                      const InnovationDist& dist, std::size_t T, std::uint64_t seed,
                                      std::uint64_t stream = 0) {
  if (!params.valid()) throw UsageError("invalid_garch_params", "simulation needs stationary GARCH parameters");
  if (!dist.valid()) throw UsageError("invalid_dof", "Student-t degrees of freedom must exceed 2");
  constexpr std::size_t burn = 500;
  CounterRng rng(seed, stream);
  const std::size_t total = T + burn;
  std::vector<double> r(total), a(total), s(total);
  double s2 = params.unconditional_variance();
  double mean_level = 0.0;
  if (arma) {
    double ar_sum = 0.0;
    for (double v : arma->phi) ar_sum += v;
    mean_level = std::abs(1.0 - ar_sum) > 1e-12 ? arma->phi0 / (1.0 - ar_sum) : arma->phi0;
  }
  for (std::size_t t = 0; t < total; ++t) {
    if (t > 0) s2 = params.alpha0 + params.alpha1 * a[t - 1] * a[t - 1] + params.beta1 * s2;
    const double eps = dist.kind == Innovation::Gaussian ? rng.normal() : rng.standardized_t(dist.nu);
    s[t] = std::sqrt(s2);
    a[t] = s[t] * eps;
    double v = a[t];
    if (arma) {
      v += arma->phi0;
      for (std::size_t j = 1; j <= arma->phi.size(); ++j) v += arma->phi[j - 1] * (t >= j ? r[t - j] : mean_level);
      for (std::size_t k = 1; k <= arma->theta.size(); ++k) v += arma->theta[k - 1] * (t >= k ? a[t - k] : 0.0);
    }
    r[t] = v;
  }
  GarchSimulation out;
  out.returns.assign(r.begin() + burn, r.end());
  out.sigma.assign(s.begin() + burn, s.end());
  return out;
}

}  // namespace rmtvol
