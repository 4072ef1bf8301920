// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adadecode/decode.hpp"

#include <algorithm>
#include <chrono>
#include <string>

#include "adadecode/error.hpp"
#include "adadecode/kv_ledger.hpp"

namespace adadecode {

void DecodeConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw InvalidArgument("DecodeConfig: gamma must lie in [0, 1]");
  }
  if (max_new_tokens == 0) throw InvalidArgument("DecodeConfig: max_new_tokens must be >= 1");
}

DecodeStats& DecodeStats::operator+=(const DecodeStats& other) noexcept {
  layer_invocations += other.layer_invocations;
  early_predictions += other.early_predictions;
  rejections += other.rejections;
  tokens_emitted += other.tokens_emitted;
  wall_seconds += other.wall_seconds;
  prefill_invocations += other.prefill_invocations;
  return *this;
}

HeadDraftProvider::HeadDraftProvider(const TransformerModel& model, const HeadSet& heads)
    : model_(model), heads_(heads) {
  heads_.validate_for(model_.config);
}

bool HeadDraftProvider::has_head(std::size_t completed_layers) const {
  return heads_.find(completed_layers) != nullptr;
}

ProbVector HeadDraftProvider::draft_distribution(std::size_t completed_layers,
                                                 std::span<const double> hidden,
                                                 std::size_t /*position*/) const {
  const IntermediateHead* head = heads_.find(completed_layers);
  if (!head) throw InvalidArgument("no head at layer " + std::to_string(completed_layers));
  return head_distribution(hidden, *head, model_);
}

namespace {

using Clock = std::chrono::steady_clock;

void check_prompt(const TransformerModel& model, std::span<const TokenId> prompt) {
  if (prompt.empty()) throw InvalidArgument("prompt must not be empty");
  if (prompt.size() > model.config.max_positions) {
    throw InvalidArgument("prompt of " + std::to_string(prompt.size()) +
                          " tokens exceeds max_positions " +
                          std::to_string(model.config.max_positions));
  }
  for (TokenId t : prompt) {
    if (t >= model.config.vocab_size) {
      throw InvalidArgument("prompt token " + std::to_string(t) + " outside vocabulary");
    }
  }
}

// The token at position max_positions − 1 is the last one that can be fed
// back, so generation is capped at max_positions + 1 − prompt length tokens.
std::size_t token_budget(const ModelConfig& c, std::size_t prompt_len, std::size_t max_new) {
  return std::min(max_new, c.max_positions + 1 - prompt_len);
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

DecodeOutput vanilla_generate(const TransformerModel& model, std::span<const TokenId> prompt,
                              const DecodeConfig& config) {
  config.validate();
  check_prompt(model, prompt);
  const auto start = Clock::now();
  const ModelConfig& c = model.config;
  Rng rng = Rng(config.seed).split(streams::kDecode);
  KvStore store(c.num_layers, c.hidden_dim);
  TokenSequence seq(prompt.begin(), prompt.end());
  const std::size_t budget = token_budget(c, prompt.size(), config.max_new_tokens);

  DecodeOutput out;
  if (prompt.size() > 1) {
    prefill(model, store, prompt.first(prompt.size() - 1));
    out.stats.prefill_invocations = c.num_layers;
  }
  while (seq.size() - prompt.size() < budget) {
    const std::size_t pos = seq.size() - 1;
    LayerActivation act = embed(std::span(seq).subspan(pos, 1), pos, model).front();
    for (std::size_t l = 0; l < c.num_layers; ++l) {
      LayerOutput o = layer_forward(model, l, std::span(&act, 1), store.view(l));
      ++out.stats.layer_invocations;
      store.commit(l, pos, o.keys, o.values);
      act = std::move(o.activations.front());
    }
    const TokenId next = sample(final_distribution(act.hidden, model), config.sampler, rng);
    seq.push_back(next);
    out.trace.push_back({pos + 1, c.num_layers, true});
    if (next == kEosToken) break;
  }
  out.tokens.assign(seq.begin() + static_cast<std::ptrdiff_t>(prompt.size()), seq.end());
  out.stats.tokens_emitted = out.tokens.size();
  out.stats.wall_seconds = seconds_since(start);
  for (std::size_t l = 0; l < c.num_layers; ++l) out.cached_rows.push_back(store.size(l));
  return out;
}

std::optional<EarlyExit> early_exit_check(const ProbVector& dist, double gamma, Sampler sampler,
                                          Rng& rng) {
  const TokenId t = sample(dist, sampler, rng);
  if (dist[t] > gamma) return EarlyExit{t, dist};
  return std::nullopt;
}

ProbVector residual_distribution(const ProbVector& p_star, const ProbVector& q) {
  if (p_star.size() != q.size()) throw InvalidArgument("residual_distribution: size mismatch");
  std::vector<double> r(p_star.size());
  double total = 0.0;
  for (std::size_t t = 0; t < r.size(); ++t) {
    r[t] = std::max(0.0, p_star[t] - q[t]);
    total += r[t];
  }
  if (!(total > 0.0)) {
    throw NumericError("residual_distribution: p* − q has no positive mass");
  }
  for (double& v : r) v /= total;
  return ProbVector(std::move(r));
}

double acceptance_probability(const ProbVector& q, const ProbVector& p_star, TokenId draft) {
  if (q.size() != p_star.size() || draft >= q.size()) {
    throw InvalidArgument("acceptance_probability: size mismatch");
  }
  if (!(q[draft] > 0.0)) {
    throw InvalidArgument("acceptance_probability: draft has zero draft probability");
  }
  return std::min(1.0, p_star[draft] / q[draft]);
}

Verdict verify_draft(const ProbVector& q, const ProbVector& p_star, TokenId draft, Sampler sampler,
                     Rng& rng) {
  if (q.size() != p_star.size() || draft >= q.size()) {
    throw InvalidArgument("verify_draft: size mismatch");
  }
  if (!(q[draft] > 0.0)) throw InvalidArgument("verify_draft: draft has zero draft probability");
  if (sampler == Sampler::greedy) {
    const TokenId best = argmax(p_star);
    return {best == draft, best};
  }
  const double accept = acceptance_probability(q, p_star, draft);
  if (rng.uniform() < accept) return {true, draft};
  return {false, sample_categorical(residual_distribution(p_star, q), rng)};
}

DecodeOutput adadecode_generate(const TransformerModel& model, const HeadSet& heads,
                                std::span<const TokenId> prompt, const DecodeConfig& config) {
  const HeadDraftProvider provider(model, heads);
  return adadecode_generate(model, provider, prompt, config);
}

DecodeOutput adadecode_generate(const TransformerModel& model, const DraftProvider& drafts,
                                std::span<const TokenId> prompt, const DecodeConfig& config) {
  config.validate();
  check_prompt(model, prompt);
  const auto start = Clock::now();
  const ModelConfig& c = model.config;
  const std::size_t num_layers = c.num_layers;
  Rng rng = Rng(config.seed).split(streams::kDecode);
  KvStore store(num_layers, c.hidden_dim);
  PendingLedger ledger(num_layers, config.max_pending);
  TokenSequence seq(prompt.begin(), prompt.end());
  const std::size_t prompt_len = prompt.size();
  const std::size_t budget = token_budget(c, prompt_len, config.max_new_tokens);
  auto emitted = [&] { return seq.size() - prompt_len; };

  DecodeOutput out;
  if (prompt_len > 1) {
    prefill(model, store, prompt.first(prompt_len - 1));
    out.stats.prefill_invocations = num_layers;
  }

  // One layer_forward over the ledger's batch for `layer` plus `current`.
  auto run_block = [&](std::size_t layer, std::optional<LayerActivation> current) {
    std::vector<LayerActivation> batch = ledger.take_batch(layer, std::move(current));
    LayerOutput o = layer_forward(model, layer, batch, store.view(layer));
    ++out.stats.layer_invocations;
    store.commit(layer, batch.front().position, o.keys, o.values);
    ledger.store_outputs(layer, o.activations);
    return std::move(o.activations);
  };

  // Checks drafts in position order against the last block's outputs. On the
  // first rejection, rolls back from the draft's position and appends the
  // replacement. Returns true when every draft was accepted.
  auto verify_outstanding = [&](const std::vector<LayerActivation>& finals) {
    const std::vector<DraftRecord> pending_drafts = ledger.drafts();
    ledger.clear_drafts();
    for (const DraftRecord& draft : pending_drafts) {
      const std::size_t index = draft.trigger_position - finals.front().position;
      const ProbVector p_star = final_distribution(finals.at(index).hidden, model);
      const Verdict verdict = config.verify ? verify_draft(draft.draft_distribution, p_star,
                                                           draft.token, config.sampler, rng)
                                            : Verdict{true, draft.token};
      ++out.stats.early_predictions;
      out.trace.push_back({draft.position(), draft.exit_layer, verdict.accepted});
      if (verdict.accepted) continue;
      ++out.stats.rejections;
      rollback(store, ledger, draft.position());
      seq.resize(draft.position());
      seq.push_back(verdict.token);
      out.trace.push_back({draft.position(), num_layers, true});
      return false;
    }
    return true;
  };

  // Completes every deferred block with no new token in flight.
  auto flush = [&] {
    std::vector<LayerActivation> finals;
    if (auto shallowest = ledger.shallowest_completed()) {
      for (std::size_t l = *shallowest; l < num_layers; ++l) finals = run_block(l, std::nullopt);
    }
    return finals;
  };

  bool finished = false;
  while (!finished && emitted() < budget) {
    const std::size_t pos = seq.size() - 1;
    LayerActivation act = embed(std::span(seq).subspan(pos, 1), pos, model).front();
    std::vector<LayerActivation> outputs;
    bool exited = false;
    for (std::size_t l = 0; l < num_layers; ++l) {
      outputs = run_block(l, std::move(act));
      act = outputs.back();
      const std::size_t completed = l + 1;
      if (completed == num_layers || ledger.size() >= config.max_pending ||
          !drafts.has_head(completed)) {
        continue;
      }
      const ProbVector q = drafts.draft_distribution(completed, act.hidden, pos);
      if (auto ex = early_exit_check(q, config.gamma, config.sampler, rng)) {
        ledger.enqueue(pos, seq[pos], completed, act.hidden);
        ledger.add_draft({ex->token, pos, completed, std::move(ex->draft)});
        seq.push_back(ex->token);
        exited = true;
        break;
      }
    }

    if (exited) {
      // A drafted EOS or an exhausted budget ends drafting: settle everything.
      if (seq.back() == kEosToken || emitted() >= budget) {
        verify_outstanding(flush());
        finished = seq.back() == kEosToken;
      }
      continue;
    }

    if (verify_outstanding(outputs)) {
      const TokenId next =
          sample(final_distribution(outputs.back().hidden, model), config.sampler, rng);
      seq.push_back(next);
      out.trace.push_back({pos + 1, num_layers, true});
    }
    finished = seq.back() == kEosToken;
  }

  out.tokens.assign(seq.begin() + static_cast<std::ptrdiff_t>(prompt_len), seq.end());
  out.stats.tokens_emitted = out.tokens.size();
  out.stats.wall_seconds = seconds_since(start);
  for (std::size_t l = 0; l < num_layers; ++l) out.cached_rows.push_back(store.size(l));
  out.pending_at_end = ledger.size();
  return out;
}

double consistency_ratio(const TransformerModel& model, const HeadSet& heads,
                         std::span<const TokenSequence> prompts, const DecodeConfig& config,
                         std::vector<std::size_t>* diverging) {
  if (prompts.empty()) throw InvalidArgument("consistency_ratio: no prompts");
  DecodeConfig greedy = config;
  greedy.sampler = Sampler::greedy;
  std::size_t matches = 0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto ada = adadecode_generate(model, heads, prompts[i], greedy);
    const auto ref = vanilla_generate(model, prompts[i], greedy);
    if (ada.tokens == ref.tokens) {
      ++matches;
    } else if (diverging) {
      diverging->push_back(i);
    }
  }
  return static_cast<double>(matches) / static_cast<double>(prompts.size());
}

}  // namespace adadecode
