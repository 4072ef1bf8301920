// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adadecode/kv_ledger.hpp"

#include <algorithm>
#include <string>

#include "adadecode/error.hpp"

namespace adadecode {

KvStore::KvStore(std::size_t num_layers, std::size_t hidden_dim)
    : dim_(hidden_dim), layers_(num_layers) {}

KvView KvStore::view(std::size_t layer) const {
  const Layer& l = layers_.at(layer);
  return KvView{l.keys, l.values, l.rows};
}

void KvStore::commit(std::size_t layer, std::size_t first_position, const Matrix& keys,
                     const Matrix& values) {
  Layer& l = layers_.at(layer);
  if (first_position != l.rows) {
    throw CacheIncompleteError("KvStore::commit: layer " + std::to_string(layer) + " caches [0, " +
                               std::to_string(l.rows) + ") but rows start at position " +
                               std::to_string(first_position));
  }
  if (keys.cols() != dim_ || values.cols() != dim_ || keys.rows() != values.rows()) {
    throw ShapeError("KvStore::commit: key/value shape mismatch");
  }
  l.keys.insert(l.keys.end(), keys.data().begin(), keys.data().end());
  l.values.insert(l.values.end(), values.data().begin(), values.data().end());
  l.rows += keys.rows();
}

void KvStore::truncate(std::size_t from_position) {
  for (Layer& l : layers_) {
    if (from_position >= l.rows) continue;
    l.rows = from_position;
    l.keys.resize(l.rows * dim_);
    l.values.resize(l.rows * dim_);
  }
}

PendingLedger::PendingLedger(std::size_t num_layers, std::size_t max_pending)
    : num_layers_(num_layers), max_pending_(max_pending) {}

void PendingLedger::enqueue(std::size_t position, TokenId token, std::size_t exit_layer,
                            std::vector<double> hidden) {
  if (exit_layer == 0 || exit_layer >= num_layers_) {
    throw InvalidArgument("PendingLedger::enqueue: exit layer " + std::to_string(exit_layer) +
                          " outside [1, " + std::to_string(num_layers_) + ")");
  }
  if (entries_.size() >= max_pending_) {
    throw CapacityError("PendingLedger::enqueue: " + std::to_string(entries_.size()) +
                        " tokens already pending (max " + std::to_string(max_pending_) + ")");
  }
  if (!entries_.empty() && entries_.back().position >= position) {
    throw InvalidArgument("PendingLedger::enqueue: positions must be enqueued in order");
  }
  entries_.push_back({position, token, exit_layer, std::move(hidden)});
}

std::vector<std::size_t> PendingLedger::positions_at(std::size_t layer) const {
  std::vector<std::size_t> out;
  for (const auto& e : entries_) {
    if (e.completed_layers <= layer) out.push_back(e.position);
  }
  return out;
}

bool PendingLedger::listed_at(std::size_t layer, std::size_t position) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const PendingEntry& e) {
    return e.position == position && e.completed_layers <= layer;
  });
}

std::vector<LayerActivation> PendingLedger::take_batch(std::size_t layer,
                                                       std::optional<LayerActivation> current) {
  std::vector<LayerActivation> batch;
  for (const auto& e : entries_) {
    if (e.completed_layers > layer) continue;
    if (e.completed_layers < layer) {
      throw CacheIncompleteError("PendingLedger::take_batch: position " +
                                 std::to_string(e.position) + " has only " +
                                 std::to_string(e.completed_layers) + " blocks complete, block " +
                                 std::to_string(layer) + " requested");
    }
    batch.push_back({e.position, e.token, e.hidden});
  }
  if (current) batch.push_back(std::move(*current));
  for (std::size_t i = 1; i < batch.size(); ++i) {
    if (batch[i].position != batch[i - 1].position + 1) {
      throw CacheIncompleteError("PendingLedger::take_batch: non-contiguous positions " +
                                 std::to_string(batch[i - 1].position) + " and " +
                                 std::to_string(batch[i].position) + " at block " +
                                 std::to_string(layer));
    }
  }
  for (auto& e : entries_) {
    if (e.completed_layers == layer) e.completed_layers = layer + 1;
  }
  return batch;
}

void PendingLedger::store_outputs(std::size_t layer, std::span<const LayerActivation> outputs) {
  for (const auto& out : outputs) {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const PendingEntry& e) { return e.position == out.position; });
    if (it == entries_.end() || it->completed_layers != layer + 1) continue;
    it->hidden = out.hidden;
  }
  std::erase_if(entries_, [&](const PendingEntry& e) { return e.completed_layers >= num_layers_; });
}

std::optional<std::size_t> PendingLedger::shallowest_completed() const {
  if (entries_.empty()) return std::nullopt;
  std::size_t best = entries_.front().completed_layers;
  for (const auto& e : entries_) best = std::min(best, e.completed_layers);
  return best;
}

void PendingLedger::add_draft(DraftRecord draft) {
  if (!drafts_.empty() && drafts_.back().position() >= draft.position()) {
    throw InvalidArgument("PendingLedger::add_draft: drafts must be added in position order");
  }
  drafts_.push_back(std::move(draft));
}

void PendingLedger::truncate(std::size_t from_position) {
  std::erase_if(entries_, [&](const PendingEntry& e) { return e.position >= from_position; });
  std::erase_if(drafts_, [&](const DraftRecord& d) { return d.position() >= from_position; });
}

std::vector<LayerActivation> prefill(const TransformerModel& model, KvStore& store,
                                     std::span<const TokenId> tokens) {
  if (tokens.empty()) return {};
  std::vector<LayerActivation> acts = embed(tokens, store.size(0), model);
  for (std::size_t l = 0; l < model.config.num_layers; ++l) {
    LayerOutput out = layer_forward(model, l, acts, store.view(l));
    store.commit(l, acts.front().position, out.keys, out.values);
    acts = std::move(out.activations);
  }
  return acts;
}

void rollback(KvStore& store, PendingLedger& ledger, std::size_t from_position) {
  store.truncate(from_position);
  ledger.truncate(from_position);
}

}  // namespace adadecode
