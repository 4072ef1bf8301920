// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

// Singular values and least squares, checked against Eigen.

#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "adadecode/error.hpp"
#include "adadecode/linalg.hpp"
#include "adadecode/matrix.hpp"
#include "support.hpp"

using namespace adadecode;
using adadecode::testing::gaussian_matrix;
using adadecode::testing::relative_error;

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) e(r, c) = m(r, c);
  }
  return e;
}

Matrix from_eigen(const Eigen::MatrixXd& e) {
  Matrix m(e.rows(), e.cols());
  for (Eigen::Index r = 0; r < e.rows(); ++r) {
    for (Eigen::Index c = 0; c < e.cols(); ++c) m(r, c) = e(r, c);
  }
  return m;
}

}  // namespace

TEST_SUITE("core-math") {
  TEST_CASE("singular values of a diagonal matrix") {
    const auto s = singular_values(Matrix::from_rows({{3, 0, 0}, {0, 2, 0}, {0, 0, 1}}));
    REQUIRE(s.size() == 3);
    CHECK(std::abs(s[0] - 3) < 1e-12);
    CHECK(std::abs(s[1] - 2) < 1e-12);
    CHECK(std::abs(s[2] - 1) < 1e-12);
  }

  TEST_CASE("singular values are sorted even when the diagonal is not") {
    const auto s = singular_values(Matrix::from_rows({{1, 0}, {0, -5}, {0, 0}}));
    CHECK(std::abs(s[0] - 5) < 1e-12);
    CHECK(std::abs(s[1] - 1) < 1e-12);
  }

  TEST_CASE("rank-one outer product") {
    const std::vector<double> u{1, -2, 3, 0.5, 4};
    const std::vector<double> v{2, 1, -1};
    Matrix m(u.size(), v.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      for (std::size_t j = 0; j < v.size(); ++j) m(i, j) = u[i] * v[j];
    }
    const double nu = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
    const double nv = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    const auto s = singular_values(m);
    REQUIRE(s.size() == 3);
    CHECK(relative_error(s[0], nu * nv) < 1e-12);
    CHECK(s[1] < 1e-12);
    CHECK(s[2] < 1e-12);
  }

  TEST_CASE("product of squared singular values is det(mᵀm)") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix m = gaussian_matrix(6, 4, rng);
      const auto s = singular_values(m);
      double prod = 1.0;
      for (double x : s) prod *= x * x;
      const Eigen::MatrixXd e = to_eigen(m);
      const double det = (e.transpose() * e).determinant();
      CHECK(relative_error(prod, det) < 1e-8);
    }
  }

  TEST_CASE("squared singular values are the eigenvalues of mᵀm") {
    Rng rng(32);
    for (const auto& [rows, cols] : std::vector<std::pair<int, int>>{{9, 5}, {4, 7}, {12, 12}}) {
      const Matrix m = gaussian_matrix(rows, cols, rng);
      const auto s = singular_values(m);
      REQUIRE(s.size() == static_cast<std::size_t>(std::min(rows, cols)));
      REQUIRE(std::is_sorted(s.begin(), s.end(), std::greater<>()));
      const Eigen::MatrixXd e = to_eigen(m);
      const Eigen::MatrixXd gram = rows >= cols ? Eigen::MatrixXd(e.transpose() * e)
                                                : Eigen::MatrixXd(e * e.transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
      auto eig = solver.eigenvalues();
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double lambda = eig(static_cast<Eigen::Index>(s.size() - 1 - i));
        CHECK(relative_error(s[i] * s[i], lambda) < 1e-8);
      }
    }
  }

  TEST_CASE("orthonormal columns have unit singular values") {
    Rng rng(33);
    const Eigen::MatrixXd a = to_eigen(gaussian_matrix(10, 6, rng));
    const Eigen::MatrixXd q = a.householderQr().householderQ() * Eigen::MatrixXd::Identity(10, 6);
    for (double s : singular_values(from_eigen(q))) CHECK(std::abs(s - 1.0) < 1e-8);
  }

  TEST_CASE("singular values of a zero matrix") {
    for (double s : singular_values(Matrix(3, 2))) CHECK(s == 0.0);
  }

  TEST_CASE("singular values reject an empty matrix") {
    CHECK_THROWS_AS(singular_values(Matrix()), ShapeError);
  }

  TEST_CASE("sweep budget exhaustion is reported") {
    Rng rng(34);
    CHECK_THROWS_AS(singular_values(gaussian_matrix(20, 20, rng), JacobiOptions{1e-300, 1}),
                    NumericError);
  }

  TEST_CASE("least squares matches Eigen") {
    Rng rng(35);
    const Matrix a = gaussian_matrix(30, 8, rng);
    const Matrix b = gaussian_matrix(30, 3, rng);
    const Eigen::MatrixXd expected = to_eigen(a).colPivHouseholderQr().solve(to_eigen(b));
    CHECK(max_abs_diff(least_squares(a, b), from_eigen(expected)) < 1e-10);
  }

  TEST_CASE("least squares rejects wide or rank-deficient systems") {
    Rng rng(36);
    CHECK_THROWS_AS(least_squares(gaussian_matrix(3, 5, rng), Matrix(3, 1)), ShapeError);
    Matrix rank_deficient = gaussian_matrix(6, 3, rng);
    for (std::size_t r = 0; r < 6; ++r) rank_deficient(r, 2) = rank_deficient(r, 0);
    CHECK_THROWS_AS(least_squares(rank_deficient, Matrix(6, 1, 1.0)), NumericError);
  }
}
