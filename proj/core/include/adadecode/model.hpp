// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "adadecode/matrix.hpp"
#include "adadecode/prob.hpp"
#include "adadecode/rng.hpp"

namespace adadecode {

/// Token id that terminates generation.
inline constexpr TokenId kEosToken = 0;

struct ModelConfig {
  std::size_t num_layers = 8;
  std::size_t hidden_dim = 64;
  std::size_t num_attn_heads = 4;
  std::size_t vocab_size = 256;
  std::size_t max_positions = 512;
  std::size_t mlp_ratio = 4;

  /// Throws InvalidArgument if any structural constraint is violated.
  void validate() const;
  std::size_t head_dim() const noexcept { return hidden_dim / num_attn_heads; }
  std::size_t mlp_dim() const noexcept { return hidden_dim * mlp_ratio; }

  bool operator==(const ModelConfig&) const = default;
};

/// Weights of one pre-norm block. Projections are stored input-major so a
/// row activation x maps to x·W.
struct BlockWeights {
  Matrix attn_norm_gain;  // 1 × d
  Matrix wq;              // d × d
  Matrix wk;              // d × d
  Matrix wv;              // d × d
  Matrix wo;              // d × d
  Matrix mlp_norm_gain;   // 1 × d
  Matrix w_up;            // d × (mlp_ratio·d)
  Matrix w_down;          // (mlp_ratio·d) × d

  bool operator==(const BlockWeights&) const = default;
};

/// Decoder-only transformer. Decoding code only ever holds it by const
/// reference; training works on a private copy.
struct TransformerModel {
  ModelConfig config;
  Matrix token_embedding;  // |V| × d
  std::vector<BlockWeights> blocks;
  Matrix final_norm_gain;  // 1 × d
  Matrix lm_head;          // |V| × d, the original head E*

  bool operator==(const TransformerModel&) const = default;
};

/// Visits every tensor in the canonical container order:
/// token_embedding; per block attn_norm_gain, wq, wk, wv, wo, mlp_norm_gain,
/// w_up, w_down; final_norm_gain; lm_head.
void for_each_tensor(const TransformerModel& model, const std::function<void(const Matrix&)>& fn);
void for_each_tensor(TransformerModel& model, const std::function<void(Matrix&)>& fn);

/// Model with every tensor zeroed, shaped for `config`.
TransformerModel zero_model(const ModelConfig& config);

/// FNV-1a over config and raw tensor bytes.
std::uint64_t model_hash(const TransformerModel& model);

/// Hidden state at one position: the output of some layer (or of the
/// embedding, for layer 0 input).
struct LayerActivation {
  std::size_t position = 0;
  TokenId token = 0;
  std::vector<double> hidden;

  bool operator==(const LayerActivation&) const = default;
};

/// Read-only view of one layer's cached keys and values for positions
/// [0, rows).
struct KvView {
  std::span<const double> keys;
  std::span<const double> values;
  std::size_t rows = 0;
};

/// Result of running a batch through one block.
struct LayerOutput {
  std::vector<LayerActivation> activations;
  Matrix keys;    // batch × d, rows in batch order
  Matrix values;  // batch × d
};

/// Weights ~ N(0, 1) / sqrt(d); norm gains = 1.
TransformerModel init_random_model(const ModelConfig& config, Rng& rng);

/// Sinusoidal encoding for `position`, scaled by 1/sqrt(d) to match the
/// embedding scale.
std::vector<double> positional_encoding(std::size_t position, std::size_t dim);

/// Token embedding plus positional encoding for tokens at consecutive
/// positions starting at `start_position`.
std::vector<LayerActivation> embed(std::span<const TokenId> tokens, std::size_t start_position,
                                   const TransformerModel& model);

/// Runs one pre-norm block over `batch`, attending to `past` and causally
/// within the batch. Positions must be strictly increasing, contiguous, and
/// begin exactly at past.rows; otherwise throws CacheIncompleteError.
/// `layer` is the 0-based block index. Every output row depends only on its
/// own position's inputs and history, so batching never changes a result bit.
LayerOutput layer_forward(const TransformerModel& model, std::size_t layer,
                          std::span<const LayerActivation> batch, const KvView& past);

/// RMS normalization with elementwise gain.
std::vector<double> rms_norm(std::span<const double> x, std::span<const double> gain);

/// softmax(final_norm(h*) · E*ᵀ).
ProbVector final_distribution(std::span<const double> h_star, const TransformerModel& model);

/// Runs `tokens` (positions 0..n-1) through every layer as a single batch per
/// layer. Returns n × d outputs for each layer, index 0 = embedding output,
/// index l = output of block l-1.
std::vector<Matrix> forward_all_layers(const TransformerModel& model,
                                       std::span<const TokenId> tokens);

}  // namespace adadecode
