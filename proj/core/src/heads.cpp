// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adadecode/heads.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "adadecode/error.hpp"
#include "adadecode/kv_ledger.hpp"
#include "adadecode/linalg.hpp"

namespace adadecode {

HeadSet::HeadSet(std::vector<IntermediateHead> heads) : heads_(std::move(heads)) {
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    const Matrix& t = heads_[i].transform;
    if (heads_[i].exit_layer == 0) throw InvalidArgument("HeadSet: exit layer must be >= 1");
    if (t.rows() != t.cols() || t.empty()) {
      throw InvalidArgument("HeadSet: transform for exit layer " +
                            std::to_string(heads_[i].exit_layer) + " is not square");
    }
    if (t.rows() != heads_.front().transform.rows()) {
      throw InvalidArgument("HeadSet: transforms disagree on hidden width");
    }
    if (!all_finite(t.data())) throw InvalidArgument("HeadSet: non-finite transform entry");
    if (i > 0 && heads_[i].exit_layer <= heads_[i - 1].exit_layer) {
      throw InvalidArgument("HeadSet: exit layers must be strictly increasing");
    }
  }
}

HeadSet HeadSet::identity(std::span<const std::size_t> exit_layers, std::size_t hidden_dim) {
  std::vector<IntermediateHead> heads;
  for (std::size_t l : exit_layers) heads.push_back({l, Matrix::identity(hidden_dim)});
  return HeadSet(std::move(heads));
}

const IntermediateHead* HeadSet::find(std::size_t exit_layer) const noexcept {
  for (const auto& h : heads_) {
    if (h.exit_layer == exit_layer) return &h;
  }
  return nullptr;
}

std::vector<std::size_t> HeadSet::exit_layers() const {
  std::vector<std::size_t> out;
  for (const auto& h : heads_) out.push_back(h.exit_layer);
  return out;
}

std::size_t HeadSet::parameter_count() const noexcept {
  std::size_t total = 0;
  for (const auto& h : heads_) total += h.transform.size();
  return total;
}

void HeadSet::validate_for(const ModelConfig& config) const {
  for (const auto& h : heads_) {
    if (h.exit_layer == 0 || h.exit_layer >= config.num_layers) {
      throw InvalidArgument("HeadSet: exit layer " + std::to_string(h.exit_layer) +
                            " outside [1, " + std::to_string(config.num_layers) + ")");
    }
    if (h.transform.rows() != config.hidden_dim) {
      throw InvalidArgument("HeadSet: transform width does not match the model");
    }
  }
}

std::vector<std::size_t> default_exit_layers(std::size_t num_layers) {
  std::vector<std::size_t> out;
  for (std::size_t q : {1, 2, 3}) {
    std::size_t l = std::clamp<std::size_t>(num_layers * q / 4, 1, num_layers - 1);
    if (out.empty() || out.back() < l) out.push_back(l);
  }
  return out;
}

namespace {

// u = T·x, then logits = E*·u.
std::vector<double> head_logits(std::span<const double> normed, const Matrix& transform,
                                const Matrix& e_star) {
  const std::size_t d = transform.rows();
  std::vector<double> u(d);
  for (std::size_t i = 0; i < d; ++i) u[i] = dot(transform.row(i), normed);
  std::vector<double> logits(e_star.rows());
  for (std::size_t t = 0; t < logits.size(); ++t) logits[t] = dot(e_star.row(t), u);
  return logits;
}

struct PreparedSamples {
  Matrix normed;   // n × d, final-normed features
  Matrix targets;  // n × |V|
  double target_neg_entropy = 0.0;  // Σ p* ln p*, summed over samples
};

PreparedSamples prepare(std::span<const DistillSample> samples, const TransformerModel& model) {
  if (samples.empty()) throw InvalidArgument("no distillation samples");
  const std::size_t d = model.config.hidden_dim;
  const std::size_t vocab = model.lm_head.rows();
  PreparedSamples p;
  p.normed = Matrix(samples.size(), d);
  p.targets = Matrix(samples.size(), vocab);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    if (samples[s].hidden.size() != d || samples[s].target.size() != vocab) {
      throw ShapeError("distillation sample does not match the model");
    }
    const auto x = rms_norm(samples[s].hidden, model.final_norm_gain.data());
    std::copy(x.begin(), x.end(), p.normed.row(s).begin());
    const auto probs = samples[s].target.probs();
    std::copy(probs.begin(), probs.end(), p.targets.row(s).begin());
    for (double v : probs) {
      if (v > 0.0) p.target_neg_entropy += v * std::log(v);
    }
  }
  return p;
}

// Mean KL and, when `grad` is non-null, its gradient w.r.t. the transform:
// with U = X·Tᵀ and logits = U·E*ᵀ, d logits = Q − P*, dU = (Q − P*)·E*,
// dT = dUᵀ·X, all averaged over samples.
double evaluate(const PreparedSamples& samples, const Matrix& transform,
                const Matrix& e_star_t, const Matrix& e_star, Matrix* grad) {
  const std::size_t n = samples.normed.rows();
  const std::size_t vocab = e_star.rows();
  Matrix logits = matmul(matmul_transposed(samples.normed, transform), e_star_t);
  double cross = 0.0;  // Σ p* ln q
  for (std::size_t s = 0; s < n; ++s) {
    auto row = logits.row(s);
    double peak = row[0];
    for (double v : row) peak = std::max(peak, v);
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - peak);
    const double log_z = peak + std::log(sum);
    const auto target = samples.targets.row(s);
    for (std::size_t t = 0; t < vocab; ++t) {
      const double log_q = row[t] - log_z;
      if (target[t] > 0.0) cross += target[t] * log_q;
      row[t] = std::exp(log_q) - target[t];  // reuse the buffer for Q − P*
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad) {
    const Matrix du = matmul(logits, e_star);
    *grad = scale(matmul(transpose(du), samples.normed), inv_n);
  }
  return (samples.target_neg_entropy - cross) * inv_n;
}

}  // namespace

ProbVector head_distribution_normed(std::span<const double> normed, const IntermediateHead& head,
                                    const TransformerModel& model) {
  if (normed.size() != head.transform.cols()) {
    throw ShapeError("head_distribution: hidden width mismatch");
  }
  return softmax(head_logits(normed, head.transform, model.lm_head));
}

ProbVector head_distribution(std::span<const double> hidden, const IntermediateHead& head,
                             const TransformerModel& model) {
  return head_distribution_normed(rms_norm(hidden, model.final_norm_gain.data()), head, model);
}

DistillData collect_distill_data(const TransformerModel& model,
                                 std::span<const TokenSequence> prompts,
                                 std::span<const std::size_t> exit_layers,
                                 std::size_t rollout_length) {
  const ModelConfig& c = model.config;
  DistillData data;
  data.exit_layers.assign(exit_layers.begin(), exit_layers.end());
  data.samples.resize(exit_layers.size());
  for (std::size_t l : exit_layers) {
    if (l == 0 || l >= c.num_layers) {
      throw InvalidArgument("collect_distill_data: exit layer " + std::to_string(l) +
                            " outside [1, L)");
    }
  }

  for (const auto& prompt : prompts) {
    if (prompt.empty() || prompt.size() > c.max_positions) continue;
    KvStore store(c.num_layers, c.hidden_dim);
    prefill(model, store, std::span(prompt).first(prompt.size() - 1));
    TokenSequence tokens = prompt;
    for (std::size_t step = 0; step < rollout_length && tokens.size() <= c.max_positions; ++step) {
      const std::size_t pos = tokens.size() - 1;
      LayerActivation act = embed(std::span(tokens).subspan(pos, 1), pos, model).front();
      std::vector<std::vector<double>> captured(exit_layers.size());
      for (std::size_t l = 0; l < c.num_layers; ++l) {
        LayerOutput out = layer_forward(model, l, std::span(&act, 1), store.view(l));
        store.commit(l, pos, out.keys, out.values);
        act = std::move(out.activations.front());
        for (std::size_t i = 0; i < exit_layers.size(); ++i) {
          if (exit_layers[i] == l + 1) captured[i] = act.hidden;
        }
      }
      ProbVector p_star = final_distribution(act.hidden, model);
      const TokenId next = argmax(p_star);
      for (std::size_t i = 0; i < exit_layers.size(); ++i) {
        data.samples[i].push_back({std::move(captured[i]), p_star});
      }
      data.final_hidden.push_back(std::move(act.hidden));
      data.generated.push_back(next);
      tokens.push_back(next);
      if (next == kEosToken) break;
    }
  }
  if (data.final_hidden.empty()) {
    throw InvalidArgument("collect_distill_data: rollouts produced no positions");
  }
  return data;
}

double mean_kl(std::span<const DistillSample> samples, const IntermediateHead& head,
               const TransformerModel& model) {
  return evaluate(prepare(samples, model), head.transform, transpose(model.lm_head),
                  model.lm_head, nullptr);
}

Matrix kl_gradient(std::span<const DistillSample> samples, const IntermediateHead& head,
                   const TransformerModel& model) {
  Matrix grad;
  evaluate(prepare(samples, model), head.transform, transpose(model.lm_head), model.lm_head,
           &grad);
  return grad;
}

HeadTrainingResult train_heads_on(const TransformerModel& model, const DistillData& data,
                                  std::size_t epochs, double learning_rate) {
  if (!(learning_rate > 0.0)) throw InvalidArgument("train_heads: learning rate must be > 0");
  const std::size_t d = model.config.hidden_dim;
  HeadTrainingResult result;
  std::vector<IntermediateHead> heads;
  const Matrix e_star_t = transpose(model.lm_head);
  for (std::size_t i = 0; i < data.exit_layers.size(); ++i) {
    const PreparedSamples prepared = prepare(data.samples[i], model);
    Matrix transform = Matrix::identity(d);
    Matrix grad;
    double loss = evaluate(prepared, transform, e_star_t, model.lm_head, &grad);
    if (!std::isfinite(loss)) {
      throw TrainingDivergedError("train_heads: initial KL is not finite");
    }
    std::vector<double> trace{loss};
    double lr = learning_rate;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
      while (lr > 1e-12) {
        Matrix candidate = transform;
        auto dst = candidate.data();
        auto g = grad.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] -= lr * g[k];
        Matrix candidate_grad;
        double candidate_loss = NAN;
        try {
          candidate_loss = evaluate(prepared, candidate, e_star_t, model.lm_head, &candidate_grad);
        } catch (const NumericError&) {
        }
        if (std::isfinite(candidate_loss) && candidate_loss <= loss) {
          transform = std::move(candidate);
          grad = std::move(candidate_grad);
          loss = candidate_loss;
          break;
        }
        lr *= 0.5;
      }
      trace.push_back(loss);
    }
    heads.push_back({data.exit_layers[i], std::move(transform)});
    result.kl_trace.push_back(std::move(trace));
  }
  result.heads = HeadSet(std::move(heads));
  return result;
}

std::vector<TokenSequence> sample_prompts(std::span<const TokenSequence> corpus,
                                          std::size_t num_prompts, std::size_t prompt_length,
                                          Rng& rng) {
  if (corpus.empty()) throw InvalidArgument("sample_prompts: empty corpus");
  std::vector<TokenSequence> prompts;
  prompts.reserve(num_prompts);
  for (std::size_t i = 0; i < num_prompts; ++i) {
    const TokenSequence& seq = corpus[rng.below(corpus.size())];
    const std::size_t len = std::min(prompt_length, seq.size());
    prompts.emplace_back(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(len));
  }
  return prompts;
}

HeadTrainingResult train_heads(const TransformerModel& model, std::span<const TokenSequence> corpus,
                               std::span<const std::size_t> exit_layers,
                               const HeadTrainingOptions& options, Rng& rng) {
  if (corpus.empty()) throw InvalidArgument("train_heads: empty corpus");
  const auto prompts = sample_prompts(corpus, options.num_prompts, options.prompt_length, rng);
  const DistillData data =
      collect_distill_data(model, prompts, exit_layers, options.rollout_length);
  return train_heads_on(model, data, options.epochs, options.learning_rate);
}

Matrix reconstruct_transform(const Matrix& e_star, const Matrix& e_target) {
  if (e_star.rows() != e_target.rows()) {
    throw ShapeError("reconstruct_transform: E* and target disagree on vocabulary size");
  }
  if (e_star.rows() < e_star.cols()) {
    throw NumericError("reconstruct_transform: E* has fewer rows than columns");
  }
  const auto sv = singular_values(e_star);
  if (sv.back() <= kRankThreshold) {
    throw NumericError("reconstruct_transform: E* is rank deficient (smallest singular value " +
                       std::to_string(sv.back()) + ")");
  }
  return least_squares(e_star, e_target);
}

RankReport rank_report(const Matrix& e_star) {
  RankReport r;
  r.rows = e_star.rows();
  r.cols = e_star.cols();
  if (e_star.empty()) return r;
  const auto sv = singular_values(e_star);
  r.num_singular_values = sv.size();
  r.num_nonzero = static_cast<std::size_t>(
      std::count_if(sv.begin(), sv.end(), [](double s) { return s > kRankThreshold; }));
  r.smallest = sv.back();
  return r;
}

}  // namespace adadecode
