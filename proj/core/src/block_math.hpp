// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

// Elementwise pieces shared by the inference and training paths. Both paths
// must produce identical forward values, so they live in one place.

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>

namespace adadecode::detail {

inline constexpr double kRmsEpsilon = 1e-6;
inline constexpr double kGeluCoeff = 0.044715;

/// 1 / sqrt(mean(x²) + eps).
inline double rms_inverse(const double* x, std::size_t n) noexcept {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += x[i] * x[i];
  return 1.0 / std::sqrt(sum / static_cast<double>(n) + kRmsEpsilon);
}

inline void rms_norm_row(const double* x, const double* gain, double* out, std::size_t n) noexcept {
  const double inv = rms_inverse(x, n);
  for (std::size_t i = 0; i < n; ++i) out[i] = gain[i] * (x[i] * inv);
}

// tanh approximation of GELU.
inline double gelu(double x) noexcept {
  const double c = std::sqrt(2.0 / std::numbers::pi);
  return 0.5 * x * (1.0 + std::tanh(c * (x + kGeluCoeff * x * x * x)));
}

inline double gelu_grad(double x) noexcept {
  const double c = std::sqrt(2.0 / std::numbers::pi);
  const double t = std::tanh(c * (x + kGeluCoeff * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * kGeluCoeff * x * x);
}

}  // namespace adadecode::detail
