// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "adadecode/matrix.hpp"
#include "adadecode/model.hpp"
#include "adadecode/prob.hpp"
#include "adadecode/rng.hpp"
#include "adadecode/train.hpp"

namespace adadecode {

/// Early-prediction head after `exit_layer` blocks. Its output matrix is
/// E*·T: the frozen final head composed with a trainable d×d transform, so
/// each head costs d² parameters instead of |V|·d.
struct IntermediateHead {
  std::size_t exit_layer = 0;
  Matrix transform;  // d × d

  bool operator==(const IntermediateHead&) const = default;
};

/// Heads sorted by strictly increasing exit layer.
class HeadSet {
 public:
  HeadSet() = default;
  /// Throws InvalidArgument for unsorted or duplicate exit layers, or
  /// non-square / mismatched transforms.
  explicit HeadSet(std::vector<IntermediateHead> heads);

  /// Identity transforms at each of `exit_layers`.
  static HeadSet identity(std::span<const std::size_t> exit_layers, std::size_t hidden_dim);

  const std::vector<IntermediateHead>& heads() const noexcept { return heads_; }
  std::size_t size() const noexcept { return heads_.size(); }
  bool empty() const noexcept { return heads_.empty(); }
  /// Head for `exit_layer`, or nullptr.
  const IntermediateHead* find(std::size_t exit_layer) const noexcept;
  std::vector<std::size_t> exit_layers() const;
  /// Trainable reals held: size() · d².
  std::size_t parameter_count() const noexcept;

  /// Throws InvalidArgument unless every head fits `config`.
  void validate_for(const ModelConfig& config) const;

  bool operator==(const HeadSet&) const = default;

 private:
  std::vector<IntermediateHead> heads_;
};

/// Default candidate exit layers {L/4, L/2, 3L/4}, deduplicated and clamped
/// to [1, L).
std::vector<std::size_t> default_exit_layers(std::size_t num_layers);

/// softmax(E*·(T·final_norm(h))). Never forms E*·T.
ProbVector head_distribution(std::span<const double> hidden, const IntermediateHead& head,
                             const TransformerModel& model);

/// head_distribution with the intermediate feature already final-normed.
ProbVector head_distribution_normed(std::span<const double> normed, const IntermediateHead& head,
                                    const TransformerModel& model);

struct DistillSample {
  std::vector<double> hidden;  // output of the exit layer
  ProbVector target;           // p* at the same position
};

struct DistillData {
  std::vector<std::size_t> exit_layers;
  /// samples[i][k]: k-th recorded position at exit_layers[i].
  std::vector<std::vector<DistillSample>> samples;
  /// Last-layer hidden state for the k-th recorded position.
  std::vector<std::vector<double>> final_hidden;
  /// Token generated at the k-th recorded position.
  std::vector<TokenId> generated;

  std::size_t num_positions() const noexcept { return final_hidden.size(); }
};

/// Greedy rollouts of up to `rollout_length` tokens from each prompt through
/// the frozen model, recording the exit-layer hidden states and p* at every
/// generated position. Stops a rollout at EOS or when positions run out.
/// Throws InvalidArgument when no position was recorded.
DistillData collect_distill_data(const TransformerModel& model,
                                 std::span<const TokenSequence> prompts,
                                 std::span<const std::size_t> exit_layers,
                                 std::size_t rollout_length);

/// Mean KL(p* ‖ q_head) over `samples`.
double mean_kl(std::span<const DistillSample> samples, const IntermediateHead& head,
               const TransformerModel& model);

/// Gradient of mean_kl with respect to the head transform.
Matrix kl_gradient(std::span<const DistillSample> samples, const IntermediateHead& head,
                   const TransformerModel& model);

struct HeadTrainingOptions {
  std::size_t epochs = 100;
  double learning_rate = 1.0;
  std::size_t num_prompts = 64;
  std::size_t prompt_length = 16;
  std::size_t rollout_length = 32;
};

struct HeadTrainingResult {
  HeadSet heads;
  /// kl_trace[i][e]: mean KL for head i before epoch e; the last entry is
  /// after the final epoch, so each trace has epochs + 1 values.
  std::vector<std::vector<double>> kl_trace;
};

/// Full-batch gradient descent on mean KL, one transform per head, starting
/// from identity. A step that raises the loss is undone and the step size
/// halved, so every trace is non-increasing.
HeadTrainingResult train_heads_on(const TransformerModel& model, const DistillData& data,
                                  std::size_t epochs, double learning_rate);

/// Samples training prompts (corpus prefixes) from `rng`, collects on-policy
/// data, and trains. The model is never modified.
HeadTrainingResult train_heads(const TransformerModel& model, std::span<const TokenSequence> corpus,
                               std::span<const std::size_t> exit_layers,
                               const HeadTrainingOptions& options, Rng& rng);

/// Prefixes of `prompt_length` tokens taken from randomly chosen corpus
/// sequences (sequences shorter than that are used whole).
std::vector<TokenSequence> sample_prompts(std::span<const TokenSequence> corpus,
                                          std::size_t num_prompts, std::size_t prompt_length,
                                          Rng& rng);

/// Threshold under which a singular value counts as zero.
inline constexpr double kRankThreshold = 1e-10;

/// T = (E*ᵀE*)⁻¹E*ᵀ·e_target, solved by QR. Throws NumericError naming the
/// smallest singular value when e_star is not full column rank.
Matrix reconstruct_transform(const Matrix& e_star, const Matrix& e_target);

struct RankReport {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t num_singular_values = 0;
  std::size_t num_nonzero = 0;
  double smallest = 0.0;
};

RankReport rank_report(const Matrix& e_star);

}  // namespace adadecode
