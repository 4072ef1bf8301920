// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures for the unit and acceptance suites.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "adadecode/decode.hpp"
#include "adadecode/kv_ledger.hpp"
#include "adadecode/matrix.hpp"
#include "adadecode/model.hpp"
#include "adadecode/prob.hpp"
#include "adadecode/rng.hpp"

namespace adadecode::testing {

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.num_layers = 4;
  c.hidden_dim = 16;
  c.num_attn_heads = 2;
  c.vocab_size = 32;
  c.max_positions = 96;
  return c;
}

// The configuration used for finite-difference checks.
inline ModelConfig grad_config() {
  ModelConfig c;
  c.num_layers = 2;
  c.hidden_dim = 8;
  c.num_attn_heads = 2;
  c.vocab_size = 32;
  c.max_positions = 32;
  return c;
}

inline TransformerModel random_model(const ModelConfig& config, std::uint64_t seed) {
  Rng rng = Rng(seed).split(streams::kInit);
  return init_random_model(config, rng);
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = lo + (hi - lo) * rng.uniform();
  return m;
}

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

inline ProbVector random_distribution(std::size_t n, Rng& rng, double sharpness = 1.0) {
  std::vector<double> logits(n);
  for (double& v : logits) v = sharpness * rng.normal();
  return softmax(logits);
}

inline std::vector<TokenId> random_tokens(std::size_t n, std::size_t vocab, Rng& rng) {
  std::vector<TokenId> t(n);
  for (auto& v : t) v = static_cast<TokenId>(1 + rng.below(vocab - 1));
  return t;
}

inline double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// Runs `tokens` through every block in contiguous chunks of the given sizes
// (cycled) and returns the last block's hidden state per position.
inline std::vector<std::vector<double>> forward_in_chunks(const TransformerModel& model,
                                                          std::span<const TokenId> tokens,
                                                          std::span<const std::size_t> chunks) {
  KvStore store(model.config.num_layers, model.config.hidden_dim);
  std::vector<std::vector<double>> finals;
  std::size_t start = 0;
  for (std::size_t c = 0; start < tokens.size(); ++c) {
    const std::size_t n = std::min(chunks[c % chunks.size()], tokens.size() - start);
    std::vector<LayerActivation> acts = embed(tokens.subspan(start, n), start, model);
    for (std::size_t l = 0; l < model.config.num_layers; ++l) {
      LayerOutput o = layer_forward(model, l, acts, store.view(l));
      store.commit(l, start, o.keys, o.values);
      acts = std::move(o.activations);
    }
    for (auto& a : acts) finals.push_back(std::move(a.hidden));
    start += n;
  }
  return finals;
}

inline std::vector<std::vector<double>> forward_sequential(const TransformerModel& model,
                                                           std::span<const TokenId> tokens) {
  const std::size_t one = 1;
  return forward_in_chunks(model, tokens, std::span(&one, 1));
}

// Random chunk sizes in [1, max_chunk] covering n tokens.
inline std::vector<std::size_t> random_split(std::size_t n, std::size_t max_chunk, Rng& rng) {
  std::vector<std::size_t> sizes;
  for (std::size_t covered = 0; covered < n;) {
    const std::size_t k = std::min<std::size_t>(1 + rng.below(max_chunk), n - covered);
    sizes.push_back(k);
    covered += k;
  }
  return sizes;
}

struct RollbackOutcome {
  bool hidden_equal = true;  // last-block hidden states vs. a fresh run
  bool kv_equal = true;      // every cached key/value row vs. a fresh prefill
  std::size_t positions_compared = 0;
};

// Drives the pending ledger the way the decoder does: a few correct tokens
// and a wrong suffix starting at `cut` are processed with random exit
// depths, the suffix is rolled back, and a corrected suffix is processed with
// full passes. The result is compared with a fresh run on the corrected
// sequence.
inline RollbackOutcome run_rollback_scenario(const TransformerModel& model, Rng& rng) {
  const std::size_t L = model.config.num_layers;
  const std::size_t V = model.config.vocab_size;
  const std::size_t cut = 2 + rng.below(8);
  const std::size_t deferred = std::min<std::size_t>(rng.below(4), cut - 1);
  std::vector<TokenId> seq = random_tokens(cut, V, rng);
  const std::vector<TokenId> wrong = random_tokens(1 + rng.below(5), V, rng);
  std::vector<TokenId> corrected = random_tokens(1 + rng.below(5), V, rng);
  corrected[0] = static_cast<TokenId>(1 + (wrong[0] % (V - 1)));  // differs from wrong[0]

  KvStore store(L, model.config.hidden_dim);
  PendingLedger ledger(L, 5);
  std::map<std::size_t, std::vector<double>> finals;
  prefill(model, store, std::span(seq).first(cut - deferred));

  auto run_token = [&](std::size_t pos, TokenId tok, std::size_t depth) {
    LayerActivation a = embed(std::span(&tok, 1), pos, model).front();
    for (std::size_t l = 0; l < depth; ++l) {
      std::vector<LayerActivation> batch = ledger.take_batch(l, std::move(a));
      LayerOutput o = layer_forward(model, l, batch, store.view(l));
      store.commit(l, batch.front().position, o.keys, o.values);
      ledger.store_outputs(l, o.activations);
      if (l + 1 == L) {
        for (const auto& x : o.activations) finals[x.position] = x.hidden;
      }
      a = o.activations.back();
    }
    if (depth < L) ledger.enqueue(pos, tok, depth, a.hidden);
  };
  auto random_depth = [&] {
    return ledger.size() >= ledger.max_pending() ? L : 1 + rng.below(L);
  };

  for (std::size_t pos = cut - deferred; pos < cut; ++pos) run_token(pos, seq[pos], random_depth());
  for (std::size_t i = 0; i < wrong.size(); ++i) run_token(cut + i, wrong[i], random_depth());

  rollback(store, ledger, cut);
  finals.erase(finals.lower_bound(cut), finals.end());
  for (std::size_t i = 0; i < corrected.size(); ++i) run_token(cut + i, corrected[i], L);

  seq.insert(seq.end(), corrected.begin(), corrected.end());
  RollbackOutcome out;
  const auto fresh = forward_sequential(model, seq);
  for (const auto& [pos, hidden] : finals) {
    ++out.positions_compared;
    if (hidden != fresh[pos]) out.hidden_equal = false;
  }
  KvStore reference(L, model.config.hidden_dim);
  prefill(model, reference, seq);
  for (std::size_t l = 0; l < L; ++l) {
    const KvView a = store.view(l);
    const KvView b = reference.view(l);
    if (a.rows != b.rows || !std::equal(a.keys.begin(), a.keys.end(), b.keys.begin(), b.keys.end()) ||
        !std::equal(a.values.begin(), a.values.end(), b.values.begin(), b.values.end())) {
      out.kv_equal = false;
    }
  }
  if (!ledger.empty()) out.kv_equal = false;
  return out;
}

// Drafts, at one fixed depth, a one-hot distribution on the token a
// reference run emitted next. Every draft is therefore correct.
class ScriptedDraftProvider final : public DraftProvider {
 public:
  ScriptedDraftProvider(std::size_t vocab, std::size_t exit_layer, std::vector<TokenId> reference)
      : vocab_(vocab), exit_layer_(exit_layer), reference_(std::move(reference)) {}

  bool has_head(std::size_t completed_layers) const override {
    return completed_layers == exit_layer_;
  }

  ProbVector draft_distribution(std::size_t, std::span<const double>,
                                std::size_t position) const override {
    std::vector<double> p(vocab_, 0.0);
    const std::size_t next = position + 1;
    p[next < reference_.size() ? reference_[next] : 0] = 1.0;
    return ProbVector(std::move(p));
  }

 private:
  std::size_t vocab_;
  std::size_t exit_layer_;
  std::vector<TokenId> reference_;
};

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("adadecode-" + tag + "-" + std::to_string(stamp) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace adadecode::testing
