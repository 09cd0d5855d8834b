#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "casc/common.hpp"

namespace casc {

/// Row-major dense matrix; just enough for the regression solves.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
};

/// C = A^T A (A is n x d, C is d x d symmetric).
inline Matrix gram(const Matrix& m) {
  Matrix g(m.cols, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* row = &m.a[i * m.cols];
    for (std::size_t r = 0; r < m.cols; ++r) {
      const double v = row[r];
      if (v == 0.0) continue;
      double* dst = &g.a[r * m.cols];
      for (std::size_t c = r; c < m.cols; ++c) dst[c] += v * row[c];
    }
  }
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < r; ++c) g.at(r, c) = g.at(c, r);
  return g;
}

/// C = A^T B (A n x d, B n x q).
inline Matrix cross(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw contract_error("cross: row counts differ");
  Matrix c(a.cols, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ra = &a.a[i * a.cols];
    const double* rb = &b.a[i * b.cols];
    for (std::size_t r = 0; r < a.cols; ++r) {
      const double v = ra[r];
      if (v == 0.0) continue;
      double* dst = &c.a[r * b.cols];
      for (std::size_t q = 0; q < b.cols; ++q) dst[q] += v * rb[q];
    }
  }
  return c;
}

struct EigenSym {
  std::vector<double> values;  // unordered, paired with vector columns
  Matrix vectors;              // column j is the eigenvector of values[j]
};

/// Cyclic Jacobi rotations on a symmetric matrix. Accurate to machine
/// precision for the small systems the cascade solves.
inline EigenSym jacobi_eigen_sym(Matrix m, int max_sweeps = 64) {
  if (m.rows != m.cols) throw contract_error("jacobi_eigen_sym: matrix not square");
  const std::size_t n = m.rows;
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

  auto off_norm = [&]() {
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = r + 1; c < n; ++c) s += m.at(r, c) * m.at(r, c);
    return std::sqrt(s);
  };
  double scale = 0.0;
  for (double x : m.a) scale = std::max(scale, std::abs(x));
  const double tol = (scale > 0.0 ? scale : 1.0) * 1e-15 * static_cast<double>(n);

  for (int sweep = 0; sweep < max_sweeps && off_norm() > tol; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m.at(p, q);
        if (std::abs(apq) <= tol * 1e-2) continue;
        const double theta = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m.at(k, p), mkq = m.at(k, q);
          m.at(k, p) = c * mkp - s * mkq;
          m.at(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m.at(p, k), mqk = m.at(q, k);
          m.at(p, k) = c * mpk - s * mqk;
          m.at(q, k) = s * mpk + c * mqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
  }
  EigenSym e;
  e.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) e.values[i] = m.at(i, i);
  e.vectors = std::move(v);
  return e;
}

/// Solves (G + lambda I) W = C for the ridge case; with lambda == 0 the
/// pseudo-inverse is used, giving the minimum-norm least-squares solution.
/// G must be symmetric positive semidefinite (a Gram matrix).
inline Matrix spd_solve(const Matrix& g, const Matrix& c, double lambda) {
  if (g.rows != c.rows) throw contract_error("spd_solve: dimension mismatch");
  EigenSym e = jacobi_eigen_sym(g);
  const std::size_t d = g.rows, q = c.cols;
  double max_ev = 0.0;
  for (double ev : e.values) max_ev = std::max(max_ev, ev);
  const double cutoff = max_ev * static_cast<double>(d) * 1e-14;

  // C projected on the eigenbasis: U = V^T C.
  Matrix u(d, q);
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = 0; k < q; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += e.vectors.at(i, j) * c.at(i, k);
      u.at(j, k) = acc;
    }
  for (std::size_t j = 0; j < d; ++j) {
    const double ev = e.values[j];
    double f;
    if (lambda > 0.0)
      f = 1.0 / (ev + lambda);
    else
      f = ev > cutoff ? 1.0 / ev : 0.0;
    for (std::size_t k = 0; k < q; ++k) u.at(j, k) *= f;
  }
  Matrix w(d, q);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < q; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += e.vectors.at(i, j) * u.at(j, k);
      w.at(i, k) = acc;
    }
  return w;
}

}  // namespace casc
