// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "adadecode/error.hpp"
#include "adadecode/heads.hpp"
#include "adadecode/kv_ledger.hpp"
#include "adadecode/linalg.hpp"
#include "adadecode/model.hpp"
#include "support.hpp"

using namespace adadecode;
using namespace adadecode::testing;

namespace {

std::vector<double> naive_final_distribution(std::span<const double> h, const TransformerModel& m) {
  const std::size_t d = h.size();
  double ms = 0.0;
  for (double x : h) ms += x * x;
  const double inv = 1.0 / std::sqrt(ms / static_cast<double>(d) + 1e-6);
  std::vector<double> logits(m.config.vocab_size);
  double hi = -INFINITY;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      s += m.lm_head(t, j) * (m.final_norm_gain(0, j) * h[j] * inv);
    }
    logits[t] = s;
    hi = std::max(hi, s);
  }
  double z = 0.0;
  for (double& l : logits) z += (l = std::exp(l - hi));
  for (double& l : logits) l /= z;
  return logits;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("config validation") {
    ModelConfig c;
    CHECK_NOTHROW(c.validate());
    c.num_layers = 1;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = ModelConfig{};
    c.num_attn_heads = 5;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = ModelConfig{};
    c.vocab_size = 32;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = ModelConfig{};
    c.max_positions = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
  }

  TEST_CASE("initialization is deterministic") {
    CHECK(random_model(tiny_config(), 3) == random_model(tiny_config(), 3));
    CHECK_FALSE(random_model(tiny_config(), 3) == random_model(tiny_config(), 4));
    CHECK(model_hash(random_model(tiny_config(), 3)) == model_hash(random_model(tiny_config(), 3)));
  }

  TEST_CASE("default configuration shapes") {
    const TransformerModel m = random_model(ModelConfig{}, 1);
    CHECK(m.lm_head.rows() == 256);
    CHECK(m.lm_head.cols() == 64);
    CHECK(m.token_embedding.rows() == 256);
    REQUIRE(m.blocks.size() == 8);
    CHECK(m.blocks[0].w_up.rows() == 64);
    CHECK(m.blocks[0].w_up.cols() == 256);
    CHECK(m.blocks[0].w_down.rows() == 256);
    CHECK(m.final_norm_gain.cols() == 64);
  }

  TEST_CASE("freshly initialized LM head is full rank") {
    const TransformerModel m = random_model(ModelConfig{}, 1);
    const auto s = singular_values(m.lm_head);
    REQUIRE(s.size() == 64);
    CHECK(s.back() > kRankThreshold);
  }

  TEST_CASE("init weights have the expected scale") {
    const TransformerModel m = random_model(ModelConfig{}, 2);
    double ss = 0.0;
    for (double v : m.blocks[3].wq.data()) ss += v * v;
    const double var = ss / static_cast<double>(m.blocks[3].wq.size());
    CHECK(var == doctest::Approx(1.0 / 64).epsilon(0.1));
    for (double g : m.blocks[0].attn_norm_gain.data()) CHECK(g == 1.0);
  }

  TEST_CASE("embedding adds the positional encoding") {
    const TransformerModel m = random_model(tiny_config(), 5);
    const TokenId t = 7;
    const auto a = embed(std::span(&t, 1), 0, m).front();
    const auto pe = positional_encoding(0, 16);
    for (std::size_t k = 0; k < 16; ++k) CHECK(a.hidden[k] == m.token_embedding(t, k) + pe[k]);
    const auto b = embed(std::span(&t, 1), 1, m).front();
    CHECK(a.hidden != b.hidden);
    CHECK(b.position == 1);
    CHECK(b.token == t);
  }

  TEST_CASE("batch embedding equals single embeddings") {
    const TransformerModel m = random_model(tiny_config(), 5);
    const std::vector<TokenId> toks{3, 9};
    const auto batch = embed(toks, 4, m);
    CHECK(batch[0] == embed(std::span(toks).subspan(0, 1), 4, m).front());
    CHECK(batch[1] == embed(std::span(toks).subspan(1, 1), 5, m).front());
  }

  TEST_CASE("embedding rejects unknown tokens and position overflow") {
    const TransformerModel m = random_model(tiny_config(), 5);
    const TokenId bad = 32;
    CHECK_THROWS_AS(embed(std::span(&bad, 1), 0, m), InvalidArgument);
    const TokenId ok = 1;
    CHECK_THROWS_AS(embed(std::span(&ok, 1), 96, m), InvalidArgument);
  }

  TEST_CASE("a batch of three equals three sequential calls bitwise") {
    const TransformerModel m = random_model(tiny_config(), 6);
    const std::vector<TokenId> prefix{4, 8, 15};
    const std::vector<TokenId> toks{16, 23, 2};
    for (std::size_t layer = 0; layer < m.config.num_layers; ++layer) {
      KvStore a(m.config.num_layers, 16);
      KvStore b(m.config.num_layers, 16);
      // Put the same past rows in both stores at `layer`.
      auto past = embed(prefix, 0, m);
      for (std::size_t l = 0; l <= layer; ++l) {
        LayerOutput o = layer_forward(m, l, past, a.view(l));
        a.commit(l, 0, o.keys, o.values);
        b.commit(l, 0, o.keys, o.values);
        if (l < layer) past = o.activations;
      }
      // Inputs at this layer for the new tokens: embeddings are fine as stand-ins.
      const auto inputs = embed(toks, 3, m);
      const LayerOutput batched = layer_forward(m, layer, inputs, a.view(layer));
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const LayerOutput one = layer_forward(m, layer, std::span(&inputs[i], 1), b.view(layer));
        CHECK(one.activations.front() == batched.activations[i]);
        CHECK(std::equal(one.keys.data().begin(), one.keys.data().end(),
                         batched.keys.row(i).begin()));
        b.commit(layer, 3 + i, one.keys, one.values);
      }
    }
  }

  TEST_CASE("causal mask hides later batch members") {
    const TransformerModel m = random_model(tiny_config(), 7);
    const std::vector<TokenId> toks{5, 6, 7, 8};
    auto inputs = embed(toks, 0, m);
    const KvView empty{};
    const LayerOutput base = layer_forward(m, 0, inputs, empty);
    for (double& v : inputs.back().hidden) v += 0.5;
    const LayerOutput perturbed = layer_forward(m, 0, inputs, empty);
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
      CHECK(base.activations[i] == perturbed.activations[i]);
    }
    CHECK_FALSE(base.activations.back() == perturbed.activations.back());
  }

  TEST_CASE("layer_forward refuses a position gap") {
    const TransformerModel m = random_model(tiny_config(), 8);
    const std::vector<TokenId> toks{5, 6};
    KvStore store(m.config.num_layers, 16);
    const auto acts = embed(toks, 0, m);
    LayerOutput o = layer_forward(m, 0, acts, store.view(0));
    store.commit(0, 0, o.keys, o.values);
    const TokenId next = 9;
    CHECK_THROWS_AS(layer_forward(m, 0, embed(std::span(&next, 1), 3, m), store.view(0)),
                    CacheIncompleteError);
    CHECK_THROWS_AS(layer_forward(m, 1, acts, store.view(0)), CacheIncompleteError);
    CHECK_NOTHROW(layer_forward(m, 0, embed(std::span(&next, 1), 2, m), store.view(0)));
  }

  TEST_CASE("batched equals sequential over random splits") {
    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
      const TransformerModel m = random_model(tiny_config(), 100 + trial);
      const auto toks = random_tokens(1 + rng.below(40), m.config.vocab_size, rng);
      const auto split = random_split(toks.size(), 7, rng);
      CHECK(forward_in_chunks(m, toks, split) == forward_sequential(m, toks));
    }
  }

  TEST_CASE("forward_all_layers matches the chunked path") {
    const TransformerModel m = random_model(tiny_config(), 9);
    Rng rng(42);
    const auto toks = random_tokens(12, 32, rng);
    const auto all = forward_all_layers(m, toks);
    REQUIRE(all.size() == m.config.num_layers + 1);
    const auto seq = forward_sequential(m, toks);
    for (std::size_t i = 0; i < toks.size(); ++i) {
      const auto row = all.back().row(i);
      CHECK(std::equal(row.begin(), row.end(), seq[i].begin()));
    }
  }

  TEST_CASE("zero LM head gives a uniform distribution") {
    TransformerModel m = random_model(tiny_config(), 10);
    m.lm_head = Matrix(32, 16);
    Rng rng(43);
    std::vector<double> h(16);
    for (double& v : h) v = rng.normal();
    const ProbVector p = final_distribution(h, m);
    for (std::size_t t = 0; t < 32; ++t) CHECK(std::abs(p[t] - 1.0 / 32) < 1e-15);
  }

  TEST_CASE("final_distribution matches a per-token dot product") {
    Rng rng(44);
    for (int trial = 0; trial < 10; ++trial) {
      const TransformerModel m = random_model(tiny_config(), 200 + trial);
      std::vector<double> h(16);
      for (double& v : h) v = 3.0 * rng.normal();
      const ProbVector p = final_distribution(h, m);
      const auto oracle = naive_final_distribution(h, m);
      for (std::size_t t = 0; t < 32; ++t) CHECK(std::abs(p[t] - oracle[t]) < 1e-12);
    }
  }

  TEST_CASE("tied logits keep the lowest index under scaling") {
    TransformerModel m = random_model(tiny_config(), 11);
    Rng rng(45);
    std::vector<double> h(16);
    for (double& v : h) v = rng.normal();
    const TokenId best = argmax(final_distribution(h, m));
    // Duplicate the winning row at a lower and a higher index.
    const TokenId low = best == 0 ? 1 : 0;
    for (std::size_t j = 0; j < 16; ++j) {
      m.lm_head(low, j) = m.lm_head(best, j);
      m.lm_head(31, j) = m.lm_head(best, j);
    }
    const TokenId expected = std::min(low, best);
    for (double s : {0.25, 1.0, 4.0, 100.0}) {
      std::vector<double> scaled = h;
      for (double& v : scaled) v *= s;
      const ProbVector p = final_distribution(scaled, m);
      CHECK(argmax(p) == expected);
    }
  }

  TEST_CASE("final_distribution is always a valid distribution") {
    const TransformerModel m = random_model(tiny_config(), 12);
    Rng rng(46);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> h(16);
      const double mag = std::pow(10.0, -6.0 + 12.0 * rng.uniform());
      for (double& v : h) v = mag * rng.normal();
      CHECK_NOTHROW(final_distribution(h, m));
    }
  }
}
