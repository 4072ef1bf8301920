// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "adadecode/decode.hpp"
#include "adadecode/heads.hpp"
#include "adadecode/model.hpp"
#include "adadecode/rng.hpp"
#include "adadecode/train.hpp"

namespace adadecode {

struct Corpus {
  std::vector<TokenSequence> sequences;
  std::uint64_t seed = 0;
  std::size_t markov_order = 1;
  double skew = 0.0;
  std::size_t vocab_size = 0;
};

/// Probability of the dominant successor in a skewed state.
inline constexpr double kDominantProbability = 0.9;

/// Order-1 Markov chain over tokens 1..vocab−1 (id 0 is reserved for EOS).
/// Each state is, with probability `skew`, given a dominant successor taken
/// with probability 0.9; otherwise (and for the remaining 0.1) the successor
/// is uniform. Deterministic given `rng`.
struct MarkovChain {
  std::size_t vocab_size = 0;
  std::vector<std::int64_t> dominant;  // −1 for a uniform state

  static MarkovChain generate(std::size_t vocab_size, double skew, Rng& rng);
  TokenId next(TokenId current, Rng& rng) const;
  TokenId start(Rng& rng) const;
};

/// Samples `num_sequences` sequences of `length` tokens from a fresh chain.
Corpus gen_corpus(std::size_t vocab_size, std::size_t num_sequences, std::size_t length,
                  double skew, Rng& rng);

struct SweepRow {
  double gamma = 0.0;
  double throughput_tokens_per_sec = 0.0;
  double invocation_ratio = 0.0;  // adadecode invocations / vanilla N·L
  double early_rate = 0.0;        // early predictions / tokens emitted
  double reject_rate = 0.0;       // rejections / max(1, early predictions)
  double consistency = 0.0;
  DecodeStats adadecode;
  DecodeStats vanilla;
};

/// Default γ grid: 0, 0.2, 0.4, 0.6, 0.75, 0.8, 0.85, 1.
std::vector<double> default_gamma_grid();

/// Aggregates decode runs over `prompts` at one γ.
SweepRow measure_point(const TransformerModel& model, const HeadSet& heads,
                       std::span<const TokenSequence> prompts, double gamma,
                       const DecodeConfig& config);

/// Same, against precomputed vanilla outputs (one per prompt).
SweepRow measure_point(const TransformerModel& model, const HeadSet& heads,
                       std::span<const TokenSequence> prompts, double gamma,
                       const DecodeConfig& config, std::span<const DecodeOutput> vanilla);

/// measure_point for each γ, in the given order. Vanilla decoding does not
/// depend on γ and runs once per prompt.
std::vector<SweepRow> run_sweep(const TransformerModel& model, const HeadSet& heads,
                                std::span<const TokenSequence> prompts,
                                std::span<const double> gammas, const DecodeConfig& config);

inline constexpr const char* kSweepCsvHeader =
    "gamma,throughput_tps,invocation_ratio,early_rate,reject_rate,consistency";
void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows);

struct HeatmapCell {
  std::size_t position = 0;  // position of the generated token
  std::size_t layer = 0;     // exit layer, or L for the final head
  double probability = 0.0;
};

/// For each token greedy decoding emits, the probability each head (and the
/// final head, as layer L) assigns to that token.
std::vector<HeatmapCell> measure_confidence_heatmap(const TransformerModel& model,
                                                    const HeadSet& heads,
                                                    std::span<const TokenId> prompt,
                                                    std::size_t max_new);

inline constexpr const char* kHeatmapCsvHeader = "position,layer,probability";
void write_heatmap_csv(std::ostream& os, std::span<const HeatmapCell> cells);

/// Recipe for the reference toy workload: a skewed Markov corpus, a base
/// model pretrained on it, heads distilled from the frozen base, and held-out
/// prompts drawn from the same chain.
struct WorkloadOptions {
  std::uint64_t seed = 7;
  ModelConfig model;
  std::size_t train_sequences = 64;
  std::size_t heldout_sequences = 64;
  std::size_t sequence_length = 64;
  double skew = 0.7;
  PretrainOptions pretrain{6, 0.5, 4};
  HeadTrainingOptions heads{100, 1.0, 32, 16, 32};
  std::size_t prompt_length = 16;
};

struct Workload {
  Corpus corpus;  // training split
  std::vector<TokenSequence> prompts;  // held-out prefixes
  PretrainResult pretrain;
  HeadTrainingResult heads;

  const TransformerModel& model() const noexcept { return pretrain.model; }
};

Workload build_workload(const WorkloadOptions& options);

/// tokens_emitted / wall_seconds. Throws InvalidArgument for a zero duration.
double throughput(const DecodeStats& stats);

/// One key=value line per DecodeStats field. wall_seconds is the only
/// nondeterministic field and can be left out.
void write_stats(std::ostream& os, const DecodeStats& stats, bool include_timing = true);
DecodeStats parse_stats(std::istream& is);

}  // namespace adadecode
