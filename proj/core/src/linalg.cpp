// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adadecode/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "adadecode/error.hpp"

namespace adadecode {

std::vector<double> singular_values(const Matrix& m, JacobiOptions options) {
  if (m.rows() == 0 || m.cols() == 0) throw ShapeError("singular_values: empty matrix");
  // Work on the orientation with rows >= cols; singular values are shared.
  Matrix tall = m.rows() >= m.cols() ? m : transpose(m);
  const std::size_t rows = tall.rows();
  const std::size_t cols = tall.cols();

  // Column-major copy: rotations touch two whole columns at a time.
  std::vector<std::vector<double>> col(cols, std::vector<double>(rows));
  double frob2 = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      col[j][i] = tall(i, j);
      frob2 += tall(i, j) * tall(i, j);
    }
  }
  const double negligible = std::numeric_limits<double>::epsilon() *
                            std::numeric_limits<double>::epsilon() * frob2;

  bool converged = cols == 1;
  for (int sweep = 0; sweep < options.max_sweeps && !converged; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < cols; ++p) {
      for (std::size_t q = p + 1; q < cols; ++q) {
        auto& a = col[p];
        auto& b = col[q];
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
          alpha += a[i] * a[i];
          beta += b[i] * b[i];
          gamma += a[i] * b[i];
        }
        if (std::min(alpha, beta) <= negligible) continue;
        if (std::abs(gamma) <= options.tolerance * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double ai = a[i];
          const double bi = b[i];
          a[i] = c * ai - s * bi;
          b[i] = s * ai + c * bi;
        }
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    throw NumericError("singular_values: Jacobi did not converge within " +
                       std::to_string(options.max_sweeps) + " sweeps");
  }

  std::vector<double> values(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double norm2 = 0.0;
    for (double v : col[j]) norm2 += v * v;
    values[j] = std::sqrt(norm2);
  }
  std::sort(values.begin(), values.end(), std::greater<>());
  return values;
}

Matrix least_squares(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("least_squares: row mismatch");
  if (a.rows() < a.cols()) throw ShapeError("least_squares: system is underdetermined");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  const std::size_t k = b.cols();
  Matrix r = a;
  Matrix rhs = b;
  std::vector<double> v(m);
  double scale = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double c2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) c2 += a(i, j) * a(i, j);
    scale = std::max(scale, std::sqrt(c2));
  }

  for (std::size_t j = 0; j < n; ++j) {
    double norm2 = 0.0;
    for (std::size_t i = j; i < m; ++i) norm2 += r(i, j) * r(i, j);
    const double norm = std::sqrt(norm2);
    if (norm <= 1e-13 * scale) throw NumericError("least_squares: rank-deficient column " + std::to_string(j));
    const double alpha = r(j, j) > 0 ? -norm : norm;
    for (std::size_t i = j; i < m; ++i) v[i] = r(i, j);
    v[j] -= alpha;
    double vnorm2 = 0.0;
    for (std::size_t i = j; i < m; ++i) vnorm2 += v[i] * v[i];
    if (vnorm2 == 0.0) continue;
    const double tau = 2.0 / vnorm2;

    for (std::size_t c = j; c < n; ++c) {
      double s = 0.0;
      for (std::size_t i = j; i < m; ++i) s += v[i] * r(i, c);
      s *= tau;
      for (std::size_t i = j; i < m; ++i) r(i, c) -= s * v[i];
    }
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t i = j; i < m; ++i) s += v[i] * rhs(i, c);
      s *= tau;
      for (std::size_t i = j; i < m; ++i) rhs(i, c) -= s * v[i];
    }
  }

  Matrix x(n, k);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t jj = n; jj-- > 0;) {
      double s = rhs(jj, c);
      for (std::size_t t = jj + 1; t < n; ++t) s -= r(jj, t) * x(t, c);
      x(jj, c) = s / r(jj, jj);
    }
  }
  require_finite(x, "least_squares");
  return x;
}

}  // namespace adadecode
