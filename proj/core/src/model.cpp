// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adadecode/model.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "adadecode/error.hpp"
#include "block_math.hpp"

namespace adadecode {

void ModelConfig::validate() const {
  if (num_layers < 2) throw InvalidArgument("ModelConfig: num_layers must be >= 2");
  if (hidden_dim == 0 || num_attn_heads == 0 || hidden_dim % num_attn_heads != 0) {
    throw InvalidArgument("ModelConfig: hidden_dim must be a positive multiple of num_attn_heads");
  }
  if (vocab_size < hidden_dim) {
    throw InvalidArgument("ModelConfig: vocab_size must be >= hidden_dim");
  }
  if (max_positions == 0) throw InvalidArgument("ModelConfig: max_positions must be >= 1");
  if (mlp_ratio == 0) throw InvalidArgument("ModelConfig: mlp_ratio must be >= 1");
}

void for_each_tensor(const TransformerModel& model, const std::function<void(const Matrix&)>& fn) {
  fn(model.token_embedding);
  for (const auto& b : model.blocks) {
    fn(b.attn_norm_gain);
    fn(b.wq);
    fn(b.wk);
    fn(b.wv);
    fn(b.wo);
    fn(b.mlp_norm_gain);
    fn(b.w_up);
    fn(b.w_down);
  }
  fn(model.final_norm_gain);
  fn(model.lm_head);
}

void for_each_tensor(TransformerModel& model, const std::function<void(Matrix&)>& fn) {
  fn(model.token_embedding);
  for (auto& b : model.blocks) {
    fn(b.attn_norm_gain);
    fn(b.wq);
    fn(b.wk);
    fn(b.wv);
    fn(b.wo);
    fn(b.mlp_norm_gain);
    fn(b.w_up);
    fn(b.w_down);
  }
  fn(model.final_norm_gain);
  fn(model.lm_head);
}

TransformerModel zero_model(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.hidden_dim;
  const std::size_t v = config.vocab_size;
  const std::size_t f = config.mlp_dim();
  TransformerModel model;
  model.config = config;
  model.token_embedding = Matrix(v, d);
  model.blocks.resize(config.num_layers);
  for (auto& b : model.blocks) {
    b.attn_norm_gain = Matrix(1, d);
    b.wq = Matrix(d, d);
    b.wk = Matrix(d, d);
    b.wv = Matrix(d, d);
    b.wo = Matrix(d, d);
    b.mlp_norm_gain = Matrix(1, d);
    b.w_up = Matrix(d, f);
    b.w_down = Matrix(f, d);
  }
  model.final_norm_gain = Matrix(1, d);
  model.lm_head = Matrix(v, d);
  return model;
}

std::uint64_t model_hash(const TransformerModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  const ModelConfig& c = model.config;
  for (std::size_t field : {c.num_layers, c.hidden_dim, c.num_attn_heads, c.vocab_size,
                            c.max_positions, c.mlp_ratio}) {
    const auto v = static_cast<std::uint64_t>(field);
    feed(&v, sizeof v);
  }
  for_each_tensor(model, [&](const Matrix& m) {
    const std::uint64_t shape[2] = {m.rows(), m.cols()};
    feed(shape, sizeof shape);
    feed(m.data().data(), m.size() * sizeof(double));
  });
  return h;
}

TransformerModel init_random_model(const ModelConfig& config, Rng& rng) {
  TransformerModel model = zero_model(config);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
  auto fill_random = [&](Matrix& m) {
    for (double& x : m.data()) x = rng.normal() * scale;
  };
  auto fill_ones = [](Matrix& m) {
    for (double& x : m.data()) x = 1.0;
  };
  fill_random(model.token_embedding);
  for (auto& b : model.blocks) {
    fill_ones(b.attn_norm_gain);
    fill_random(b.wq);
    fill_random(b.wk);
    fill_random(b.wv);
    fill_random(b.wo);
    fill_ones(b.mlp_norm_gain);
    fill_random(b.w_up);
    fill_random(b.w_down);
  }
  fill_ones(model.final_norm_gain);
  fill_random(model.lm_head);
  return model;
}

std::vector<double> positional_encoding(std::size_t position, std::size_t dim) {
  std::vector<double> pe(dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  const double pos = static_cast<double>(position);
  for (std::size_t i = 0; i < dim; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
    pe[i] = std::sin(pos * freq) * scale;
    if (i + 1 < dim) pe[i + 1] = std::cos(pos * freq) * scale;
  }
  return pe;
}

std::vector<LayerActivation> embed(std::span<const TokenId> tokens, std::size_t start_position,
                                   const TransformerModel& model) {
  const ModelConfig& c = model.config;
  if (start_position + tokens.size() > c.max_positions) {
    throw InvalidArgument("embed: positions [" + std::to_string(start_position) + ", " +
                          std::to_string(start_position + tokens.size()) +
                          ") exceed max_positions " + std::to_string(c.max_positions));
  }
  std::vector<LayerActivation> out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const TokenId t = tokens[i];
    if (t >= c.vocab_size) {
      throw InvalidArgument("embed: token " + std::to_string(t) + " outside vocabulary of " +
                            std::to_string(c.vocab_size));
    }
    const std::size_t pos = start_position + i;
    std::vector<double> hidden = positional_encoding(pos, c.hidden_dim);
    const auto row = model.token_embedding.row(t);
    for (std::size_t k = 0; k < c.hidden_dim; ++k) hidden[k] = row[k] + hidden[k];
    out.push_back({pos, t, std::move(hidden)});
  }
  return out;
}

std::vector<double> rms_norm(std::span<const double> x, std::span<const double> gain) {
  if (x.size() != gain.size()) throw ShapeError("rms_norm: gain length mismatch");
  std::vector<double> out(x.size());
  detail::rms_norm_row(x.data(), gain.data(), out.data(), x.size());
  return out;
}

namespace {

Matrix rms_norm_rows(const Matrix& x, const Matrix& gain) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    detail::rms_norm_row(x.row(i).data(), gain.data().data(), out.row(i).data(), x.cols());
  }
  return out;
}

}  // namespace

LayerOutput layer_forward(const TransformerModel& model, std::size_t layer,
                          std::span<const LayerActivation> batch, const KvView& past) {
  const ModelConfig& c = model.config;
  if (layer >= c.num_layers) {
    throw InvalidArgument("layer_forward: layer " + std::to_string(layer) + " out of range");
  }
  if (batch.empty()) throw InvalidArgument("layer_forward: empty batch");
  const std::size_t d = c.hidden_dim;
  const std::size_t n = batch.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (batch[i].position != past.rows + i) {
      throw CacheIncompleteError("layer_forward: layer " + std::to_string(layer) +
                                 " has keys/values for positions [0, " + std::to_string(past.rows) +
                                 ") but batch entry " + std::to_string(i) + " is at position " +
                                 std::to_string(batch[i].position));
    }
    if (batch[i].hidden.size() != d) throw ShapeError("layer_forward: hidden width mismatch");
  }
  if (past.keys.size() < past.rows * d || past.values.size() < past.rows * d) {
    throw ShapeError("layer_forward: cache view shorter than its row count");
  }

  const BlockWeights& w = model.blocks[layer];
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(batch[i].hidden.begin(), batch[i].hidden.end(), x.row(i).begin());
  }

  const Matrix a = rms_norm_rows(x, w.attn_norm_gain);
  Matrix q = matmul(a, w.wq);
  Matrix k = matmul(a, w.wk);
  Matrix v = matmul(a, w.wv);

  const std::size_t heads = c.num_attn_heads;
  const std::size_t hd = c.head_dim();
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
  auto key_row = [&](std::size_t j) -> const double* {
    return j < past.rows ? past.keys.data() + j * d : k.row(j - past.rows).data();
  };
  auto value_row = [&](std::size_t j) -> const double* {
    return j < past.rows ? past.values.data() + j * d : v.row(j - past.rows).data();
  };

  Matrix ctx(n, d);
  std::vector<double> weights(past.rows + n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t visible = past.rows + i + 1;
    const double* qi = q.row(i).data();
    double* out = ctx.row(i).data();
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * hd;
      double peak = -INFINITY;
      for (std::size_t j = 0; j < visible; ++j) {
        const double* kj = key_row(j) + off;
        double s = 0.0;
        for (std::size_t t = 0; t < hd; ++t) s += qi[off + t] * kj[t];
        weights[j] = s * inv_sqrt_hd;
        if (weights[j] > peak) peak = weights[j];
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < visible; ++j) {
        weights[j] = std::exp(weights[j] - peak);
        sum += weights[j];
      }
      const double inv_sum = 1.0 / sum;
      for (std::size_t j = 0; j < visible; ++j) {
        const double wj = weights[j] * inv_sum;
        const double* vj = value_row(j) + off;
        for (std::size_t t = 0; t < hd; ++t) out[off + t] += wj * vj[t];
      }
    }
  }

  Matrix r = add(x, matmul(ctx, w.wo));
  const Matrix b = rms_norm_rows(r, w.mlp_norm_gain);
  Matrix z = matmul(b, w.w_up);
  for (double& val : z.data()) val = detail::gelu(val);
  const Matrix out = add(r, matmul(z, w.w_down));

  LayerOutput result;
  result.activations.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = out.row(i);
    result.activations.push_back({batch[i].position, batch[i].token, {row.begin(), row.end()}});
  }
  result.keys = std::move(k);
  result.values = std::move(v);
  return result;
}

ProbVector final_distribution(std::span<const double> h_star, const TransformerModel& model) {
  const std::size_t d = model.config.hidden_dim;
  if (h_star.size() != d) throw ShapeError("final_distribution: hidden width mismatch");
  if (!all_finite(h_star)) throw NumericError("final_distribution: non-finite hidden state");
  const std::vector<double> y = rms_norm(h_star, model.final_norm_gain.data());
  std::vector<double> logits(model.lm_head.rows());
  for (std::size_t t = 0; t < logits.size(); ++t) logits[t] = dot(model.lm_head.row(t), y);
  return softmax(logits);
}

std::vector<Matrix> forward_all_layers(const TransformerModel& model,
                                       std::span<const TokenId> tokens) {
  const std::size_t d = model.config.hidden_dim;
  std::vector<LayerActivation> acts = embed(tokens, 0, model);
  std::vector<Matrix> outputs;
  outputs.reserve(model.config.num_layers + 1);
  auto snapshot = [&]() {
    Matrix m(acts.size(), d);
    for (std::size_t i = 0; i < acts.size(); ++i) {
      std::copy(acts[i].hidden.begin(), acts[i].hidden.end(), m.row(i).begin());
    }
    outputs.push_back(std::move(m));
  };
  snapshot();
  for (std::size_t l = 0; l < model.config.num_layers; ++l) {
    acts = layer_forward(model, l, acts, KvView{}).activations;
    snapshot();
  }
  return outputs;
}

}  // namespace adadecode
