// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

// Block indices here are 0-based: a token that exits after 4 blocks still
// needs blocks 4..7 of an 8-block model.

#include <doctest.h>

#include <vector>

#include "adadecode/error.hpp"
#include "adadecode/kv_ledger.hpp"
#include "support.hpp"

using namespace adadecode;
using namespace adadecode::testing;

namespace {

LayerActivation act(std::size_t position, std::size_t d = 4) {
  return {position, static_cast<TokenId>(position + 1), std::vector<double>(d, 0.5)};
}

Matrix rows(std::size_t n, std::size_t d = 4, double fill = 1.0) { return Matrix(n, d, fill); }

DraftRecord draft_at(std::size_t trigger) {
  return {3, trigger, 2, ProbVector({0.5, 0.5})};
}

}  // namespace

TEST_SUITE("kv-ledger") {
  TEST_CASE("a token exiting after 4 of 8 blocks is listed only at the deeper blocks") {
    PendingLedger ledger(8, 5);
    ledger.enqueue(10, 7, 4, std::vector<double>(4));
    for (std::size_t l = 0; l < 4; ++l) CHECK_FALSE(ledger.listed_at(l, 10));
    for (std::size_t l = 4; l < 8; ++l) CHECK(ledger.listed_at(l, 10));
  }

  TEST_CASE("two exits at different depths") {
    PendingLedger ledger(8, 5);
    ledger.enqueue(10, 7, 2, std::vector<double>(4));
    ledger.enqueue(11, 8, 4, std::vector<double>(4));
    CHECK(ledger.positions_at(4) == std::vector<std::size_t>{10, 11});
    CHECK(ledger.positions_at(2) == std::vector<std::size_t>{10});
    CHECK(ledger.positions_at(1).empty());
    CHECK(ledger.size() == 2);
  }

  TEST_CASE("enqueue enforces the pending cap and the exit range") {
    PendingLedger ledger(8, 2);
    ledger.enqueue(0, 1, 2, std::vector<double>(4));
    ledger.enqueue(1, 1, 2, std::vector<double>(4));
    CHECK_THROWS_AS(ledger.enqueue(2, 1, 2, std::vector<double>(4)), CapacityError);
    PendingLedger other(8, 5);
    CHECK_THROWS_AS(other.enqueue(0, 1, 8, std::vector<double>(4)), InvalidArgument);
    CHECK_THROWS_AS(other.enqueue(0, 1, 0, std::vector<double>(4)), InvalidArgument);
    PendingLedger none(8, 0);
    CHECK_THROWS_AS(none.enqueue(0, 1, 2, std::vector<double>(4)), CapacityError);
  }

  TEST_CASE("take_batch with nothing pending is the current token alone") {
    PendingLedger ledger(4, 5);
    const auto batch = ledger.take_batch(1, act(6));
    REQUIRE(batch.size() == 1);
    CHECK(batch[0].position == 6);
  }

  TEST_CASE("take_batch prepends pending entries and consumes them per block") {
    PendingLedger ledger(8, 5);
    ledger.enqueue(5, 9, 4, std::vector<double>(4, 2.0));
    const auto batch = ledger.take_batch(4, act(6));
    REQUIRE(batch.size() == 2);
    CHECK(batch[0].position == 5);
    CHECK(batch[0].token == 9);
    CHECK(batch[0].hidden == std::vector<double>(4, 2.0));
    CHECK(batch[1].position == 6);
    CHECK_FALSE(ledger.listed_at(4, 5));
    for (std::size_t l = 5; l < 8; ++l) CHECK(ledger.listed_at(l, 5));
  }

  TEST_CASE("take_batch refuses a non-contiguous batch") {
    PendingLedger ledger(8, 5);
    ledger.enqueue(5, 9, 4, std::vector<double>(4));
    CHECK_THROWS_AS(ledger.take_batch(4, act(7)), CacheIncompleteError);
  }

  TEST_CASE("store_outputs advances entries and retires finished ones") {
    PendingLedger ledger(4, 5);
    ledger.enqueue(3, 1, 2, std::vector<double>(4));
    auto batch = ledger.take_batch(2, act(4));
    for (auto& a : batch) a.hidden.assign(4, 7.0);
    ledger.store_outputs(2, batch);
    REQUIRE(ledger.size() == 1);
    CHECK(ledger.entries()[0].completed_layers == 3);
    CHECK(ledger.entries()[0].hidden == std::vector<double>(4, 7.0));
    batch = ledger.take_batch(3, act(4));
    ledger.store_outputs(3, batch);
    CHECK(ledger.size() == 0);
  }

  TEST_CASE("commit advances the watermark") {
    KvStore store(2, 4);
    store.commit(0, 0, rows(5), rows(5));
    CHECK(store.size(0) == 5);
    store.commit(0, 5, rows(2), rows(2));
    CHECK(store.size(0) == 7);  // watermark at position 6
    CHECK(store.size(1) == 0);
  }

  TEST_CASE("commit detects a gap") {
    KvStore store(2, 4);
    store.commit(0, 0, rows(5), rows(5));
    CHECK_THROWS_AS(store.commit(0, 7, rows(1), rows(1)), CacheIncompleteError);
    CHECK_THROWS_AS(store.commit(0, 3, rows(1), rows(1)), CacheIncompleteError);
    CHECK_THROWS_AS(store.commit(0, 5, rows(1, 3), rows(1, 3)), ShapeError);
  }

  TEST_CASE("view exposes committed rows in order") {
    KvStore store(1, 2);
    store.commit(0, 0, Matrix::from_rows({{1, 2}, {3, 4}}), Matrix::from_rows({{5, 6}, {7, 8}}));
    const KvView v = store.view(0);
    CHECK(v.rows == 2);
    CHECK(std::vector<double>(v.keys.begin(), v.keys.end()) == std::vector<double>{1, 2, 3, 4});
    CHECK(std::vector<double>(v.values.begin(), v.values.end()) ==
          std::vector<double>{5, 6, 7, 8});
  }

  TEST_CASE("rollback at zero empties everything") {
    KvStore store(3, 4);
    PendingLedger ledger(3, 5);
    for (std::size_t l = 0; l < 3; ++l) store.commit(l, 0, rows(4 - l), rows(4 - l));
    ledger.enqueue(3, 1, 1, std::vector<double>(4));
    ledger.add_draft(draft_at(3));
    rollback(store, ledger, 0);
    for (std::size_t l = 0; l < 3; ++l) CHECK(store.size(l) == 0);
    CHECK(ledger.empty());
  }

  TEST_CASE("rollback past the end is a no-op") {
    KvStore store(2, 4);
    PendingLedger ledger(2, 5);
    store.commit(0, 0, rows(3), rows(3));
    store.commit(1, 0, rows(2), rows(2));
    ledger.enqueue(2, 1, 1, std::vector<double>(4));
    ledger.add_draft(draft_at(2));
    rollback(store, ledger, 50);
    CHECK(store.size(0) == 3);
    CHECK(store.size(1) == 2);
    CHECK(ledger.size() == 1);
    CHECK(ledger.drafts().size() == 1);
  }

  TEST_CASE("rollback leaves nothing at or beyond the cut") {
    Rng rng(81);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t L = 6;
      KvStore store(L, 4);
      PendingLedger ledger(L, 5);
      // Shallow blocks lead, deeper ones lag, as during decoding.
      const std::size_t committed = 5 + rng.below(10);
      std::size_t lag = 0;
      for (std::size_t l = 0; l < L; ++l) {
        lag = std::min(committed, lag + rng.below(2));
        store.commit(l, 0, rows(committed - lag), rows(committed - lag));
      }
      for (std::size_t p = committed; p < committed + 3; ++p) {
        ledger.enqueue(p, 1, 1 + rng.below(L - 1), std::vector<double>(4));
        ledger.add_draft(draft_at(p));
      }
      const std::size_t cut = rng.below(committed + 4);
      rollback(store, ledger, cut);
      for (std::size_t l = 0; l < L; ++l) {
        CHECK(store.size(l) <= cut);
        if (l > 0) CHECK(store.size(l) <= store.size(l - 1));
      }
      for (const auto& e : ledger.entries()) CHECK(e.position < cut);
      for (const auto& d : ledger.drafts()) CHECK(d.position() < cut);
    }
  }

  TEST_CASE("prefill fills every block for the given tokens") {
    const TransformerModel m = random_model(tiny_config(), 30);
    KvStore store(m.config.num_layers, 16);
    const std::vector<TokenId> toks{4, 5, 6, 7};
    const auto finals = prefill(m, store, toks);
    for (std::size_t l = 0; l < m.config.num_layers; ++l) CHECK(store.size(l) == 4);
    const auto seq = forward_sequential(m, toks);
    for (std::size_t i = 0; i < toks.size(); ++i) CHECK(finals[i].hidden == seq[i]);
  }
}
