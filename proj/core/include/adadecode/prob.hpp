// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "adadecode/rng.hpp"

namespace adadecode {

using TokenId = std::uint32_t;

/// Categorical distribution over a vocabulary. Entries are non-negative and
/// sum to 1 within kSumTolerance; the constructor enforces both.
class ProbVector {
 public:
  static constexpr double kSumTolerance = 1e-9;

  ProbVector() = default;
  explicit ProbVector(std::vector<double> probs);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const noexcept { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

  bool operator==(const ProbVector&) const = default;

 private:
  std::vector<double> probs_;
};

enum class Sampler { greedy, categorical };

/// Numerically stable softmax (max-shifted). Throws InvalidArgument on empty
/// input and NumericError on non-finite logits.
ProbVector softmax(std::span<const double> logits);

/// KL(p || q) in nats with 0·ln(0/q) = 0. Throws InvalidArgument naming the
/// first index where q is zero but p is not.
double kl_divergence(const ProbVector& p, const ProbVector& q);

/// Index of the largest probability; ties go to the lowest index.
TokenId argmax(const ProbVector& dist) noexcept;

/// Inverse-CDF draw. Consumes exactly one uniform from `rng`.
TokenId sample_categorical(const ProbVector& dist, Rng& rng) noexcept;

/// Greedy → argmax (no draw); categorical → sample_categorical.
TokenId sample(const ProbVector& dist, Sampler sampler, Rng& rng) noexcept;

}  // namespace adadecode
