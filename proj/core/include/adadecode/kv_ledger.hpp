// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "adadecode/matrix.hpp"
#include "adadecode/model.hpp"
#include "adadecode/prob.hpp"

namespace adadecode {

/// Per-layer key/value rows. Layer l holds positions [0, size(l)); the
/// watermark (last cached position) is size(l) − 1.
class KvStore {
 public:
  KvStore(std::size_t num_layers, std::size_t hidden_dim);

  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::size_t size(std::size_t layer) const { return layers_.at(layer).rows; }
  KvView view(std::size_t layer) const;

  /// Appends rows for positions [first_position, first_position + rows).
  /// Throws CacheIncompleteError unless first_position == size(layer).
  void commit(std::size_t layer, std::size_t first_position, const Matrix& keys,
              const Matrix& values);

  /// Drops every row at position >= from_position on every layer.
  void truncate(std::size_t from_position);

 private:
  struct Layer {
    std::vector<double> keys;
    std::vector<double> values;
    std::size_t rows = 0;
  };
  std::size_t dim_;
  std::vector<Layer> layers_;
};

/// A token whose deeper layers are deferred. `completed_layers` blocks have
/// run; `hidden` is the output of the last of them (input to the next).
struct PendingEntry {
  std::size_t position = 0;
  TokenId token = 0;
  std::size_t completed_layers = 0;
  std::vector<double> hidden;
};

/// An early-predicted token awaiting verification. The draft occupies
/// trigger_position + 1.
struct DraftRecord {
  TokenId token = 0;
  std::size_t trigger_position = 0;
  std::size_t exit_layer = 0;
  ProbVector draft_distribution;

  std::size_t position() const noexcept { return trigger_position + 1; }
};

/// The per-layer pending lists. With 0-based block index l, the list for l
/// holds every pending token whose completed_layers <= l; a token exiting
/// after e blocks is therefore listed at blocks e..L-1 and nowhere shallower.
/// Also owns the outstanding drafts so that rollback is a single call.
class PendingLedger {
 public:
  PendingLedger(std::size_t num_layers, std::size_t max_pending);

  std::size_t num_layers() const noexcept { return num_layers_; }
  std::size_t max_pending() const noexcept { return max_pending_; }
  /// Distinct pending tokens.
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty() && drafts_.empty(); }

  /// Registers a token that exited after `exit_layer` blocks with the output
  /// of that block. Throws CapacityError when max_pending entries exist and
  /// InvalidArgument for an exit layer outside [1, L).
  void enqueue(std::size_t position, TokenId token, std::size_t exit_layer,
               std::vector<double> hidden);

  /// Positions listed for 0-based block `layer`, ascending.
  std::vector<std::size_t> positions_at(std::size_t layer) const;
  bool listed_at(std::size_t layer, std::size_t position) const;
  const std::vector<PendingEntry>& entries() const noexcept { return entries_; }

  /// Batch for block `layer`: every entry listed there, then `current`. The
  /// entries are consumed at this layer (they remain listed deeper). Throws
  /// CacheIncompleteError if the resulting positions are not contiguous.
  std::vector<LayerActivation> take_batch(std::size_t layer,
                                          std::optional<LayerActivation> current);

  /// Stores block outputs for the entries consumed by the preceding
  /// take_batch(layer). Entries that have now completed every block leave
  /// the ledger. Outputs for positions that are not pending are ignored.
  void store_outputs(std::size_t layer, std::span<const LayerActivation> outputs);

  /// Smallest completed_layers across entries, or nullopt when empty.
  std::optional<std::size_t> shallowest_completed() const;

  void add_draft(DraftRecord draft);
  const std::vector<DraftRecord>& drafts() const noexcept { return drafts_; }
  void clear_drafts() noexcept { drafts_.clear(); }

  /// Drops entries and drafts at positions >= from_position.
  void truncate(std::size_t from_position);

 private:
  std::size_t num_layers_;
  std::size_t max_pending_;
  std::vector<PendingEntry> entries_;  // ascending position
  std::vector<DraftRecord> drafts_;    // ascending position
};

/// Runs `tokens` at positions [store.size(0), ...) through every block as one
/// batch per block and commits their keys/values. Returns the last block's
/// outputs. Throws CacheIncompleteError when the store's layers disagree.
std::vector<LayerActivation> prefill(const TransformerModel& model, KvStore& store,
                                     std::span<const TokenId> tokens);

/// Removes every cached row, pending entry, and draft at positions >=
/// from_position. Positions past the end are a no-op.
void rollback(KvStore& store, PendingLedger& ledger, std::size_t from_position);

}  // namespace adadecode
