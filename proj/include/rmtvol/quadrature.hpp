#pragma once

// Adaptive Gauss-Kronrod (7/15) quadrature on a finite interval.

#include <cmath>

namespace rmtvol {

namespace detail {

inline constexpr double kKronrodNodes[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double kKronrodWeights[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for nodes 1, 3, 5 and the centre.
inline constexpr double kGaussWeights[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <typename F>
void gk15(F& f, double a, double b, double& kronrod, double& error) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  const double fc = f(mid);
  double k = fc * kKronrodWeights[7];
  double g = fc * kGaussWeights[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kKronrodNodes[j];
    const double pair = f(mid - dx) + f(mid + dx);
    k += kKronrodWeights[j] * pair;
    if (j % 2 == 1) g += kGaussWeights[j / 2] * pair;
  }
  kronrod = k * half;
  error = std::abs((k - g) * half);
}

template <typename F>
double adaptive_gk(F& f, double a, double b, double tol, int depth) {
  double k, err;
  gk15(f, a, b, k, err);
  if (err <= tol || depth <= 0) return k;
  const double m = 0.5 * (a + b);
  return adaptive_gk(f, a, m, 0.5 * tol, depth - 1) +
         adaptive_gk(f, m, b, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Integral of f over [a, b] with absolute tolerance `tol`. Subintervals are
/// bisected until the Gauss/Kronrod difference falls under their share of
/// the tolerance.
template <typename F>
double integrate(F&& f, double a, double b, double tol = 1e-10, int max_depth = 40) {
  if (a == b) return 0.0;
  return detail::adaptive_gk(f, a, b, tol, max_depth);
}

}  // namespace rmtvol
