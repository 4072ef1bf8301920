// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "adadecode/heads.hpp"
#include "adadecode/model.hpp"
#include "adadecode/prob.hpp"
#include "adadecode/rng.hpp"
#include "adadecode/train.hpp"

namespace adadecode {

struct DecodeConfig {
  double gamma = 0.75;
  std::size_t max_pending = 5;
  std::size_t max_new_tokens = 512;
  Sampler sampler = Sampler::greedy;
  std::uint64_t seed = 0;
  /// Diagnostic switch: when false every draft is accepted unchecked, which
  /// forfeits output parity.
  bool verify = true;

  void validate() const;
};

struct DecodeStats {
  std::uint64_t layer_invocations = 0;  // decode-phase layer_forward calls
  std::uint64_t early_predictions = 0;  // drafts that reached verification
  std::uint64_t rejections = 0;
  std::uint64_t tokens_emitted = 0;
  double wall_seconds = 0.0;
  std::uint64_t prefill_invocations = 0;

  DecodeStats& operator+=(const DecodeStats& other) noexcept;
};

/// One decision in the exit trace: the token at `position` came from block
/// depth `exit_layer` (L for a full pass) and was or was not kept.
struct ExitEvent {
  std::size_t position = 0;
  std::size_t exit_layer = 0;
  bool accepted = false;

  bool operator==(const ExitEvent&) const = default;
};

struct DecodeOutput {
  std::vector<TokenId> tokens;  // generated tokens, prompt excluded
  DecodeStats stats;
  std::vector<ExitEvent> trace;
  std::vector<std::size_t> cached_rows;  // per-layer KV rows when decoding ended
  std::size_t pending_at_end = 0;        // deferred tokens left in the ledger
};

/// Source of early-prediction distributions. The default implementation wraps
/// a HeadSet; tests substitute scripted providers.
class DraftProvider {
 public:
  virtual ~DraftProvider() = default;
  /// True if an early prediction may be attempted after `completed_layers`
  /// blocks.
  virtual bool has_head(std::size_t completed_layers) const = 0;
  /// Draft distribution for the token following `position`, given the
  /// output of block `completed_layers` − 1 at that position.
  virtual ProbVector draft_distribution(std::size_t completed_layers,
                                        std::span<const double> hidden,
                                        std::size_t position) const = 0;
};

class HeadDraftProvider final : public DraftProvider {
 public:
  HeadDraftProvider(const TransformerModel& model, const HeadSet& heads);
  bool has_head(std::size_t completed_layers) const override;
  ProbVector draft_distribution(std::size_t completed_layers, std::span<const double> hidden,
                                std::size_t position) const override;

 private:
  const TransformerModel& model_;
  const HeadSet& heads_;
};

/// Strictly sequential reference decoder: prefill, then one full pass over
/// all L blocks per generated token.
DecodeOutput vanilla_generate(const TransformerModel& model, std::span<const TokenId> prompt,
                              const DecodeConfig& config);

struct EarlyExit {
  TokenId token;
  ProbVector draft;
};

/// Samples t from `dist` with `sampler` and fires iff dist[t] > gamma.
std::optional<EarlyExit> early_exit_check(const ProbVector& dist, double gamma, Sampler sampler,
                                          Rng& rng);

struct Verdict {
  bool accepted = false;
  TokenId token = 0;  // the draft if accepted, else the replacement
};

/// min(1, p*[draft] / q[draft]).
double acceptance_probability(const ProbVector& q, const ProbVector& p_star, TokenId draft);

/// Modified rejection sampling. Categorical: accept with probability
/// min(1, p*/q) at the draft, else resample from normalize(max(0, p* − q)).
/// Greedy: accept iff draft == argmax p*, else return argmax p*.
Verdict verify_draft(const ProbVector& q, const ProbVector& p_star, TokenId draft, Sampler sampler,
                     Rng& rng);

/// normalize(max(0, p* − q)). Throws NumericError if the residual is all zero.
ProbVector residual_distribution(const ProbVector& p_star, const ProbVector& q);

/// Layer-parallel decoder with confidence-gated early predictions.
DecodeOutput adadecode_generate(const TransformerModel& model, const HeadSet& heads,
                                std::span<const TokenId> prompt, const DecodeConfig& config);

/// Same, with a caller-supplied draft source.
DecodeOutput adadecode_generate(const TransformerModel& model, const DraftProvider& drafts,
                                std::span<const TokenId> prompt, const DecodeConfig& config);

/// Fraction of prompts on which greedy adadecode_generate and greedy
/// vanilla_generate emit identical token sequences. `diverging`, when given,
/// receives the indices of prompts that differ.
double consistency_ratio(const TransformerModel& model, const HeadSet& heads,
                         std::span<const TokenSequence> prompts, const DecodeConfig& config,
                         std::vector<std::size_t>* diverging = nullptr);

}  // namespace adadecode
