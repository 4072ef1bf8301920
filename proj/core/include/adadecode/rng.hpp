// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace adadecode {

/// Counter-based generator: draw n of stream s under seed k is a pure
/// function mix(key(k, s), n). Platform independent, and `split` hands out
/// streams that never overlap with the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  /// Standard normal via Box-Muller; consumes two draws.
  double normal() noexcept;
  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;

  /// Independent generator for sub-stream `stream` under the same seed.
  Rng split(std::uint64_t stream) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t counter() const noexcept { return counter_; }

  bool operator==(const Rng&) const = default;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Well-known sub-stream ids so that independent consumers never interleave.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kCorpus = 2;
inline constexpr std::uint64_t kPretrain = 3;
inline constexpr std::uint64_t kHeads = 4;
inline constexpr std::uint64_t kDecode = 5;
inline constexpr std::uint64_t kBench = 6;
}  // namespace streams

}  // namespace adadecode
