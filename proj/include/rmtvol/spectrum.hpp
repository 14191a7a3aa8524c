#pragma once

// Equal-time correlation matrices C = G G^T / T and their symmetric
// eigendecomposition, with eigenvectors scaled to v^T v = N.

#include "rmtvol/core.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>

namespace rmtvol {

enum class CorrelationKind { Return, Volatility, VolatilityReturn, Residual };

inline const char* to_string(CorrelationKind k) {
  switch (k) {
    case CorrelationKind::Return: return "return";
    case CorrelationKind::Volatility: return "volatility";
    case CorrelationKind::VolatilityReturn: return "volatility_return";
    case CorrelationKind::Residual: return "residual";
  }
  return "unknown";
}

struct CorrelationMatrix {
  Matrix entries;
  CorrelationKind kind = CorrelationKind::Return;

  Eigen::Index size() const { return entries.rows(); }
};

struct SpectralDecomposition {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // column k pairs with eigenvalues[k]; v^T v = N

  Eigen::Index size() const { return eigenvalues.size(); }
  double largest() const { return eigenvalues[eigenvalues.size() - 1]; }
  Vector largest_vector() const { return eigenvectors.col(eigenvectors.cols() - 1); }
};

/// C = (1/T) G G^T for a row-normalized N x T panel; symmetry is enforced by
/// averaging with the transpose.
inline CorrelationMatrix correlation(const Matrix& normalized, CorrelationKind kind = CorrelationKind::Return) {
  if (normalized.cols() < 2)
    throw DataError("too_few_observations", "correlation needs at least 2 observations per series");
  if (normalized.rows() < 1) throw DataError("empty_panel", "correlation needs at least one series");
  CorrelationMatrix c;
  c.kind = kind;
  c.entries = normalized * normalized.transpose() / static_cast<double>(normalized.cols());
  c.entries = 0.5 * (c.entries + c.entries.transpose()).eval();
  return c;
}

/// Scales columns to squared norm `n` and flips each so that its
/// largest-magnitude component is positive (first such index on ties).
inline void normalize_eigenvectors(Matrix& v, double n) {
  for (Eigen::Index k = 0; k < v.cols(); ++k) {
    auto col = v.col(k);
    const double norm = col.norm();
    if (norm > 0.0) col *= std::sqrt(n) / norm;
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < col.size(); ++i) {
      // Tolerate rounding so symmetric vectors pick a stable index.
      if (std::abs(col[i]) > best * (1.0 + 1e-12)) {
        best = std::abs(col[i]);
        arg = i;
      }
    }
    if (col[arg] < 0.0) col = -col;
  }
}

/// Full symmetric eigendecomposition (Householder tridiagonalization plus
/// implicit QL via Eigen), eigenvalues ascending.
inline SpectralDecomposition eigendecompose(const Matrix& c) {
  if (c.rows() != c.cols() || c.rows() == 0) throw UsageError("not_square", "eigendecomposition needs a square matrix");
  if (!c.allFinite()) throw DataError("non_finite_matrix", "matrix contains non-finite entries");
  const Matrix sym = 0.5 * (c + c.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success)
    throw NumericalError("eigen_failure", "symmetric eigensolver did not converge");
  SpectralDecomposition d;
  d.eigenvalues = solver.eigenvalues();
  d.eigenvectors = solver.eigenvectors();
  normalize_eigenvectors(d.eigenvectors, static_cast<double>(c.rows()));
  return d;
}

inline SpectralDecomposition eigendecompose(const CorrelationMatrix& c) { return eigendecompose(c.entries); }

/// One row per eigenvalue: index (1-based, ascending), lambda and, when
/// requested, the eigenvector components (columns named after the assets
/// when `names` matches the dimension).
inline void write_spectrum_csv(std::ostream& out, const SpectralDecomposition& d, bool with_vectors,
                               std::span<const std::string> names = {}) {
  const bool named = names.size() == static_cast<std::size_t>(d.eigenvectors.rows());
  out << "# rmtvol eigen v1\n";
  out << "index,lambda";
  if (with_vectors)
    for (Eigen::Index i = 0; i < d.eigenvectors.rows(); ++i) {
      if (named)
        out << ',' << names[static_cast<std::size_t>(i)];
      else
        out << ",v" << (i + 1);
    }
  out << '\n';
  char buf[40];
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", d.eigenvalues[k]);
    out << (k + 1) << ',' << buf;
    if (with_vectors)
      for (Eigen::Index i = 0; i < d.eigenvectors.rows(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", d.eigenvectors(i, k));
        out << ',' << buf;
      }
    out << '\n';
  }
}

}  // namespace rmtvol
