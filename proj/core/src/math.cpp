// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <string>

#include "adadecode/error.hpp"
#include "adadecode/matrix.hpp"
#include "adadecode/prob.hpp"

namespace adadecode {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                     std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a) + " x " + shape_str(b));
  }
  const std::size_t n = a.rows();
  const std::size_t k_dim = a.cols();
  const std::size_t m = b.cols();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* out = c.row(i).data();
    const double* lhs = a.row(i).data();
    for (std::size_t k = 0; k < k_dim; ++k) {
      const double s = lhs[k];
      const double* rhs = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) out[j] += s * rhs[j];
    }
  }
  require_finite(c, "matmul");
  return c;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transposed: " + shape_str(a) + " x " + shape_str(b) + "^T");
  }
  // Same per-entry accumulation order as dot(a.row(i), b.row(j)); going
  // through the explicit transpose lets the inner loop vectorize.
  return matmul(a, transpose(b));
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  }
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix c = a;
  auto out = c.data();
  auto rhs = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += rhs[i];
  require_finite(c, "add");
  return c;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix c = a;
  auto out = c.data();
  auto rhs = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= rhs[i];
  require_finite(c, "subtract");
  return c;
}

Matrix scale(const Matrix& m, double factor) {
  Matrix c = m;
  for (double& v : c.data()) v *= factor;
  require_finite(c, "scale");
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
  return worst;
}

double max_abs(const Matrix& m) noexcept {
  double worst = 0.0;
  for (double v : m.data()) worst = std::max(worst, std::abs(v));
  return worst;
}

bool all_finite(std::span<const double> values) noexcept {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Matrix& m, const char* context) {
  if (!all_finite(m.data())) {
    throw NumericError(std::string(context) + ": non-finite entry in result");
  }
}

// ---------------------------------------------------------------------------
// Probability

ProbVector::ProbVector(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw InvalidArgument("ProbVector: empty");
  double total = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (!(probs_[i] >= 0.0) || !std::isfinite(probs_[i])) {
      throw InvalidArgument("ProbVector: invalid entry at index " + std::to_string(i));
    }
    total += probs_[i];
  }
  if (std::abs(total - 1.0) > kSumTolerance) {
    throw InvalidArgument("ProbVector: entries sum to " + std::to_string(total));
  }
}

ProbVector softmax(std::span<const double> logits) {
  if (logits.empty()) throw InvalidArgument("softmax: empty input");
  if (!all_finite(logits)) throw NumericError("softmax: non-finite logit");
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - peak);
    total += probs[i];
  }
  const double inv = 1.0 / total;
  for (double& p : probs) p *= inv;
  return ProbVector(std::move(probs));
}

double kl_divergence(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) {
    throw InvalidArgument("kl_divergence: length mismatch " + std::to_string(p.size()) + " vs " +
                          std::to_string(q.size()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) {
      throw InvalidArgument("kl_divergence: q is zero where p is positive at index " +
                            std::to_string(i));
    }
    total += p[i] * std::log(p[i] / q[i]);
  }
  return total;
}

TokenId argmax(const ProbVector& dist) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < dist.size(); ++i) {
    if (dist[i] > dist[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

TokenId sample_categorical(const ProbVector& dist, Rng& rng) noexcept {
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    cumulative += dist[i];
    last_positive = i;
    if (u < cumulative) return static_cast<TokenId>(i);
  }
  // Rounding left cumulative just under u.
  return static_cast<TokenId>(last_positive);
}

TokenId sample(const ProbVector& dist, Sampler sampler, Rng& rng) noexcept {
  return sampler == Sampler::greedy ? argmax(dist) : sample_categorical(dist, rng);
}

}  // namespace adadecode
