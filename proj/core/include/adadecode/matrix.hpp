// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace adadecode {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  /// Single-row matrix holding `values`.
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a × b. Each output entry accumulates k = 0..K-1 in order (i-k-j loop), so
/// results are reproducible and independent of how rows are batched.
Matrix matmul(const Matrix& a, const Matrix& b);

/// a × bᵀ, bitwise equal to matmul(a, transpose(b)).
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double factor);

/// In-order dot product.
double dot(std::span<const double> a, std::span<const double> b) noexcept;

/// Max-norm of the elementwise difference. Throws ShapeError on mismatch.
double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& m) noexcept;
bool all_finite(std::span<const double> values) noexcept;

/// Throws NumericError if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* context);

}  // namespace adadecode
