#pragma once

// Quasi-Newton (BFGS) minimisation with central-difference gradients, plus a
// numerical Hessian for standard errors.

#include "rmtvol/core.hpp"

#include <cmath>
#include <functional>
#include <limits>

namespace rmtvol {

struct BfgsOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;   // on max |g_i|
  double relative_f_tolerance = 1e-8;  // |df| / max(1, |f|)
  /// A stalled line search still counts as converged below this gradient.
  double stall_gradient_tolerance = 1e-4;
  double relative_step = 1e-5;  // finite-difference step, relative to max(1, |x_i|)
};

enum class BfgsStatus { GradientTolerance, FunctionTolerance, LineSearchStalled, MaxIterations };

struct BfgsResult {
  Vector x;
  double f = std::numeric_limits<double>::infinity();
  Vector gradient;
  int iterations = 0;
  BfgsStatus status = BfgsStatus::MaxIterations;
  bool converged = false;
};

using Objective = std::function<double(const Vector&)>;

inline Vector numerical_gradient(const Objective& f, const Vector& x, double relative_step) {
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = relative_step * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Central-difference Hessian with steps h_i = step * max(1, |x_i|).
inline Matrix numerical_hessian(const Objective& f, const Vector& x, double step = 1e-4) {
  const Eigen::Index n = x.size();
  Matrix h(n, n);
  Vector steps(n);
  for (Eigen::Index i = 0; i < n; ++i) steps[i] = step * std::max(1.0, std::abs(x[i]));
  const double f0 = f(x);
  Vector p = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    p[i] = x[i] + steps[i];
    const double fp = f(p);
    p[i] = x[i] - steps[i];
    const double fm = f(p);
    p[i] = x[i];
    h(i, i) = (fp - 2.0 * f0 + fm) / (steps[i] * steps[i]);
    for (Eigen::Index j = 0; j < i; ++j) {
      auto eval = [&](double si, double sj) {
        p[i] = x[i] + si * steps[i];
        p[j] = x[j] + sj * steps[j];
        const double v = f(p);
        p[i] = x[i];
        p[j] = x[j];
        return v;
      };
      const double v = (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) /
                       (4.0 * steps[i] * steps[j]);
      h(i, j) = v;
      h(j, i) = v;
    }
  }
  return h;
}

/// Minimises f from x0. Non-finite objective values are treated as +inf, so
/// objectives may signal infeasible points that way.
inline BfgsResult minimize_bfgs(const Objective& objective, Vector x0, const BfgsOptions& opt = {}) {
  auto f = [&](const Vector& x) {
    const double v = objective(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  const Eigen::Index n = x0.size();
  BfgsResult res;
  res.x = std::move(x0);
  res.f = f(res.x);
  if (!std::isfinite(res.f)) {
    res.status = BfgsStatus::LineSearchStalled;
    res.gradient = Vector::Zero(n);
    return res;
  }
  res.gradient = numerical_gradient(f, res.x, opt.relative_step);
  Matrix inv_h = Matrix::Identity(n, n);
  bool identity = true;
  int flat_iterations = 0;

  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    if (res.gradient.cwiseAbs().maxCoeff() < opt.gradient_tolerance) {
      res.status = BfgsStatus::GradientTolerance;
      res.converged = true;
      return res;
    }
    Vector dir = -inv_h * res.gradient;
    double slope = res.gradient.dot(dir);
    if (!(slope < 0.0)) {
      inv_h.setIdentity();
      identity = true;
      dir = -res.gradient;
      slope = res.gradient.dot(dir);
    }
    // Keep the first step from leaping far outside the region of interest.
    if (identity) {
      const double norm = dir.norm();
      if (norm > 1.0) {
        dir /= norm;
        slope /= norm;
      }
    }

    double t = 1.0;
    Vector x_new;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      x_new = res.x + t * dir;
      f_new = f(x_new);
      if (f_new <= res.f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (!identity) {
        inv_h.setIdentity();
        identity = true;
        continue;
      }
      res.status = BfgsStatus::LineSearchStalled;
      res.converged = res.gradient.cwiseAbs().maxCoeff() < opt.stall_gradient_tolerance;
      return res;
    }

    const Vector g_new = numerical_gradient(f, x_new, opt.relative_step);
    const Vector s = x_new - res.x;
    const Vector y = g_new - res.gradient;
    const double sy = s.dot(y);
    const double df = std::abs(res.f - f_new) / std::max(1.0, std::abs(res.f));
    res.x = x_new;
    res.f = f_new;
    res.gradient = g_new;

    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (identity) {
        inv_h *= sy / y.squaredNorm();
        identity = false;
      }
      const double rho = 1.0 / sy;
      const Matrix eye = Matrix::Identity(n, n);
      inv_h = (eye - rho * s * y.transpose()) * inv_h * (eye - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }

    flat_iterations = df < opt.relative_f_tolerance ? flat_iterations + 1 : 0;
    if (flat_iterations >= 3) {
      res.status = BfgsStatus::FunctionTolerance;
      res.converged = true;
      return res;
    }
  }
  res.status = BfgsStatus::MaxIterations;
  res.converged = res.gradient.cwiseAbs().maxCoeff() < opt.gradient_tolerance;
  return res;
}

}  // namespace rmtvol
