// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "adadecode/model.hpp"
#include "adadecode/rng.hpp"

namespace adadecode {

using TokenSequence = std::vector<TokenId>;

struct LossAndGradient {
  double loss = 0.0;            // mean next-token cross-entropy (nats)
  std::size_t predictions = 0;  // number of (context, next token) pairs
  TransformerModel gradient;    // d loss / d weight, same shapes as the model
};

/// Mean next-token cross-entropy over `sequences`, with the analytic
/// gradient with respect to every base weight.
LossAndGradient loss_and_gradient(const TransformerModel& model,
                                  std::span<const TokenSequence> sequences);

/// Mean next-token cross-entropy without the backward pass.
double corpus_loss(const TransformerModel& model, std::span<const TokenSequence> sequences);

struct PretrainOptions {
  std::size_t epochs = 1;
  double learning_rate = 0.1;
  std::size_t batch_size = 8;  // sequences per gradient step
};

struct PretrainResult {
  TransformerModel model;
  double initial_loss = 0.0;
  std::vector<double> epoch_losses;  // full-corpus loss after each epoch
};

/// Minibatch gradient descent on next-token cross-entropy over all base
/// weights. Sequence order is reshuffled from `rng` every epoch. Throws
/// TrainingDivergedError when the loss stops being finite.
PretrainResult pretrain_base(const TransformerModel& model, std::span<const TokenSequence> corpus,
                             const PretrainOptions& options, Rng& rng);

}  // namespace adadecode
