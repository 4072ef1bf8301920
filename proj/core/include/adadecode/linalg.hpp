// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "adadecode/matrix.hpp"

namespace adadecode {

struct JacobiOptions {
  double tolerance = 1e-12;
  int max_sweeps = 100;
};

/// Singular values in non-increasing order, min(rows, cols) of them, via
/// one-sided Jacobi rotations. Throws NumericError if the sweep limit is hit.
std::vector<double> singular_values(const Matrix& m, JacobiOptions options = {});

/// Least-squares solution X of A·X ≈ B via Householder QR. A must have at
/// least as many rows as columns and full column rank.
Matrix least_squares(const Matrix& a, const Matrix& b);

}  // namespace adadecode
