// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adadecode/train.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>
#include <utility>
#include <string>

#include "adadecode/error.hpp"
#include "block_math.hpp"

namespace adadecode {

namespace {

struct BlockCache {
  Matrix x;                  // block input
  std::vector<double> inv1;  // attention-norm 1/rms per row
  Matrix a;                  // normalized input to attention
  Matrix q, k, v;
  std::vector<Matrix> attn;  // per head, n × n lower-triangular weights
  Matrix ctx;
  Matrix r;                  // after attention residual
  std::vector<double> inv2;
  Matrix b;                  // normalized input to MLP
  Matrix z;                  // pre-activation
  Matrix g;                  // GELU(z)
};

struct SequenceCache {
  std::vector<BlockCache> blocks;
  Matrix h_last;
  std::vector<double> inv_final;
  Matrix xf;  // final-normed
  Matrix logits;
};

Matrix norm_rows(const Matrix& x, const Matrix& gain, std::vector<double>& inv) {
  Matrix out(x.rows(), x.cols());
  inv.resize(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    inv[i] = detail::rms_inverse(x.row(i).data(), x.cols());
    const auto in = x.row(i);
    auto o = out.row(i);
    for (std::size_t k = 0; k < x.cols(); ++k) o[k] = gain(0, k) * (in[k] * inv[i]);
  }
  return out;
}

// Given dy for y = gain ⊙ x·s, accumulates d gain and returns dx.
Matrix norm_rows_backward(const Matrix& x, const Matrix& gain, const std::vector<double>& inv,
                          const Matrix& dy, Matrix& dgain) {
  const std::size_t d = x.cols();
  Matrix dx(x.rows(), d);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double s = inv[i];
    double proj = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      dgain(0, k) += dy(i, k) * x(i, k) * s;
      proj += dy(i, k) * gain(0, k) * x(i, k);
    }
    const double coeff = s * s * s * proj / static_cast<double>(d);
    for (std::size_t k = 0; k < d; ++k) dx(i, k) = s * gain(0, k) * dy(i, k) - coeff * x(i, k);
  }
  return dx;
}

void accumulate(Matrix& into, const Matrix& delta) {
  auto out = into.data();
  auto in = delta.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[i];
}

Matrix embed_matrix(const TransformerModel& model, std::span<const TokenId> tokens) {
  const auto acts = embed(tokens, 0, model);
  Matrix x(acts.size(), model.config.hidden_dim);
  for (std::size_t i = 0; i < acts.size(); ++i) {
    std::copy(acts[i].hidden.begin(), acts[i].hidden.end(), x.row(i).begin());
  }
  return x;
}

SequenceCache forward_sequence(const TransformerModel& model, std::span<const TokenId> tokens) {
  const ModelConfig& c = model.config;
  const std::size_t n = tokens.size();
  const std::size_t heads = c.num_attn_heads;
  const std::size_t hd = c.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  SequenceCache cache;
  cache.blocks.resize(c.num_layers);
  Matrix h = embed_matrix(model, tokens);
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const BlockWeights& w = model.blocks[l];
    BlockCache& bc = cache.blocks[l];
    bc.x = h;
    bc.a = norm_rows(bc.x, w.attn_norm_gain, bc.inv1);
    bc.q = matmul(bc.a, w.wq);
    bc.k = matmul(bc.a, w.wk);
    bc.v = matmul(bc.a, w.wv);
    bc.ctx = Matrix(n, c.hidden_dim);
    bc.attn.assign(heads, Matrix(n, n));
    for (std::size_t hh = 0; hh < heads; ++hh) {
      const std::size_t off = hh * hd;
      Matrix& att = bc.attn[hh];
      for (std::size_t i = 0; i < n; ++i) {
        double peak = -INFINITY;
        for (std::size_t j = 0; j <= i; ++j) {
          double s = 0.0;
          for (std::size_t t = 0; t < hd; ++t) s += bc.q(i, off + t) * bc.k(j, off + t);
          att(i, j) = s * scale;
          peak = std::max(peak, att(i, j));
        }
        double sum = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          att(i, j) = std::exp(att(i, j) - peak);
          sum += att(i, j);
        }
        for (std::size_t j = 0; j <= i; ++j) {
          att(i, j) /= sum;
          for (std::size_t t = 0; t < hd; ++t) bc.ctx(i, off + t) += att(i, j) * bc.v(j, off + t);
        }
      }
    }
    bc.r = add(bc.x, matmul(bc.ctx, w.wo));
    bc.b = norm_rows(bc.r, w.mlp_norm_gain, bc.inv2);
    bc.z = matmul(bc.b, w.w_up);
    bc.g = bc.z;
    for (double& val : bc.g.data()) val = detail::gelu(val);
    h = add(bc.r, matmul(bc.g, w.w_down));
  }
  cache.h_last = h;
  cache.xf = norm_rows(h, model.final_norm_gain, cache.inv_final);
  cache.logits = matmul_transposed(cache.xf, model.lm_head);
  return cache;
}

// Cross-entropy of predicting tokens[i+1] from row i; fills dlogits with
// (softmax − onehot)·weight when requested.
double sequence_ce(const Matrix& logits, std::span<const TokenId> tokens, double weight,
                   Matrix* dlogits) {
  double total = 0.0;
  const std::size_t vocab = logits.cols();
  if (dlogits) *dlogits = Matrix(logits.rows(), vocab);
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    const auto row = logits.row(i);
    double peak = row[0];
    for (double v : row) peak = std::max(peak, v);
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - peak);
    const double log_z = peak + std::log(sum);
    total += log_z - row[tokens[i + 1]];
    if (dlogits) {
      for (std::size_t t = 0; t < vocab; ++t) (*dlogits)(i, t) = std::exp(row[t] - log_z) * weight;
      (*dlogits)(i, tokens[i + 1]) -= weight;
    }
  }
  return total;
}

void backward_sequence(const TransformerModel& model, std::span<const TokenId> tokens,
                       const SequenceCache& cache, const Matrix& dlogits, TransformerModel& grad) {
  const ModelConfig& c = model.config;
  const std::size_t n = tokens.size();
  const std::size_t heads = c.num_attn_heads;
  const std::size_t hd = c.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  accumulate(grad.lm_head, matmul(transpose(dlogits), cache.xf));
  const Matrix dxf = matmul(dlogits, model.lm_head);
  Matrix dh = norm_rows_backward(cache.h_last, model.final_norm_gain, cache.inv_final, dxf,
                                 grad.final_norm_gain);

  for (std::size_t l = c.num_layers; l-- > 0;) {
    const BlockWeights& w = model.blocks[l];
    BlockWeights& gw = grad.blocks[l];
    const BlockCache& bc = cache.blocks[l];

    // MLP: h = r + gelu(b·W_up)·W_down
    accumulate(gw.w_down, matmul(transpose(bc.g), dh));
    Matrix dz = matmul_transposed(dh, w.w_down);
    for (std::size_t i = 0; i < dz.size(); ++i) dz.data()[i] *= detail::gelu_grad(bc.z.data()[i]);
    accumulate(gw.w_up, matmul(transpose(bc.b), dz));
    const Matrix db = matmul_transposed(dz, w.w_up);
    Matrix dr = dh;
    accumulate(dr, norm_rows_backward(bc.r, w.mlp_norm_gain, bc.inv2, db, gw.mlp_norm_gain));

    // Attention: r = x + ctx·W_o
    accumulate(gw.wo, matmul(transpose(bc.ctx), dr));
    const Matrix dctx = matmul_transposed(dr, w.wo);
    Matrix dq(n, c.hidden_dim), dk(n, c.hidden_dim), dv(n, c.hidden_dim);
    std::vector<double> dw(n);
    for (std::size_t hh = 0; hh < heads; ++hh) {
      const std::size_t off = hh * hd;
      const Matrix& att = bc.attn[hh];
      for (std::size_t i = 0; i < n; ++i) {
        double weighted = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          double s = 0.0;
          for (std::size_t t = 0; t < hd; ++t) {
            s += dctx(i, off + t) * bc.v(j, off + t);
            dv(j, off + t) += att(i, j) * dctx(i, off + t);
          }
          dw[j] = s;
          weighted += att(i, j) * s;
        }
        for (std::size_t j = 0; j <= i; ++j) {
          const double ds = att(i, j) * (dw[j] - weighted) * scale;
          for (std::size_t t = 0; t < hd; ++t) {
            dq(i, off + t) += ds * bc.k(j, off + t);
            dk(j, off + t) += ds * bc.q(i, off + t);
          }
        }
      }
    }
    const Matrix at = transpose(bc.a);
    accumulate(gw.wq, matmul(at, dq));
    accumulate(gw.wk, matmul(at, dk));
    accumulate(gw.wv, matmul(at, dv));
    Matrix da = matmul_transposed(dq, w.wq);
    accumulate(da, matmul_transposed(dk, w.wk));
    accumulate(da, matmul_transposed(dv, w.wv));
    dh = dr;
    accumulate(dh, norm_rows_backward(bc.x, w.attn_norm_gain, bc.inv1, da, gw.attn_norm_gain));
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto row = grad.token_embedding.row(tokens[i]);
    for (std::size_t k = 0; k < c.hidden_dim; ++k) row[k] += dh(i, k);
  }
}

std::size_t count_predictions(std::span<const TokenSequence> sequences) {
  std::size_t total = 0;
  for (const auto& s : sequences) total += s.size() > 1 ? s.size() - 1 : 0;
  return total;
}

void check_sequences(const TransformerModel& model, std::span<const TokenSequence> sequences) {
  for (const auto& s : sequences) {
    if (s.size() > model.config.max_positions) {
      throw InvalidArgument("training sequence of length " + std::to_string(s.size()) +
                            " exceeds max_positions");
    }
  }
  if (count_predictions(sequences) == 0) {
    throw InvalidArgument("training data contains no next-token pairs");
  }
}

}  // namespace

LossAndGradient loss_and_gradient(const TransformerModel& model,
                                  std::span<const TokenSequence> sequences) {
  check_sequences(model, sequences);
  LossAndGradient out;
  out.predictions = count_predictions(sequences);
  out.gradient = zero_model(model.config);
  const double weight = 1.0 / static_cast<double>(out.predictions);
  double total = 0.0;
  for (const auto& seq : sequences) {
    if (seq.size() < 2) continue;
    const SequenceCache cache = forward_sequence(model, seq);
    Matrix dlogits;
    total += sequence_ce(cache.logits, seq, weight, &dlogits);
    backward_sequence(model, seq, cache, dlogits, out.gradient);
  }
  out.loss = total * weight;
  return out;
}

double corpus_loss(const TransformerModel& model, std::span<const TokenSequence> sequences) {
  check_sequences(model, sequences);
  double total = 0.0;
  for (const auto& seq : sequences) {
    if (seq.size() < 2) continue;
    total += sequence_ce(forward_sequence(model, seq).logits, seq, 0.0, nullptr);
  }
  return total / static_cast<double>(count_predictions(sequences));
}

PretrainResult pretrain_base(const TransformerModel& model, std::span<const TokenSequence> corpus,
                             const PretrainOptions& options, Rng& rng) {
  if (corpus.empty()) throw InvalidArgument("pretrain_base: empty corpus");
  if (options.batch_size == 0) throw InvalidArgument("pretrain_base: batch_size must be >= 1");
  if (!(options.learning_rate > 0.0)) throw InvalidArgument("pretrain_base: learning rate must be > 0");
  PretrainResult result;
  result.model = model;
  result.initial_loss = corpus_loss(model, corpus);
  if (options.epochs == 0) return result;

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<TokenSequence> batch;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + options.batch_size); ++i) {
        if (corpus[order[i]].size() > 1) batch.push_back(corpus[order[i]]);
      }
      if (batch.empty()) continue;
      LossAndGradient lg;
      try {
        lg = loss_and_gradient(result.model, batch);
      } catch (const NumericError& e) {
        throw TrainingDivergedError(std::string("pretrain_base: ") + e.what() +
                                    "; try a lower learning rate");
      }
      if (!std::isfinite(lg.loss)) {
        throw TrainingDivergedError("pretrain_base: loss diverged in epoch " +
                                    std::to_string(epoch) + "; try a lower learning rate");
      }
      std::vector<Matrix*> params;
      std::vector<const Matrix*> grads;
      for_each_tensor(result.model, [&](Matrix& m) { params.push_back(&m); });
      for_each_tensor(std::as_const(lg.gradient), [&](const Matrix& m) { grads.push_back(&m); });
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto dst = params[p]->data();
        auto src = grads[p]->data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= options.learning_rate * src[i];
      }
    }
    double loss = 0.0;
    try {
      loss = corpus_loss(result.model, corpus);
    } catch (const NumericError&) {
      loss = NAN;
    }
    if (!std::isfinite(loss)) {
      throw TrainingDivergedError("pretrain_base: loss diverged after epoch " +
                                  std::to_string(epoch) + "; try a lower learning rate");
    }
    result.epoch_losses.push_back(loss);
  }
  return result;
}

}  // namespace adadecode
