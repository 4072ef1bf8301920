// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "adadecode/bench.hpp"
#include "adadecode/decode.hpp"
#include "adadecode/heads.hpp"
#include "adadecode/kv_ledger.hpp"
#include "adadecode/model.hpp"

namespace {

using namespace adadecode;

const TransformerModel& toy_model() {
  static const TransformerModel m = [] {
    Rng rng = Rng(1).split(streams::kInit);
    return init_random_model(ModelConfig{}, rng);
  }();
  return m;
}

// One block over a batch of new tokens with 64 cached rows.
void BM_LayerForward(benchmark::State& state) {
  const TransformerModel& m = toy_model();
  const auto batch = static_cast<std::size_t>(state.range(0));
  std::vector<TokenId> history(64, 7);
  KvStore store(m.config.num_layers, m.config.hidden_dim);
  const auto past = embed(history, 0, m);
  const LayerOutput o = layer_forward(m, 0, past, store.view(0));
  store.commit(0, 0, o.keys, o.values);
  const std::vector<TokenId> fresh(batch, 9);
  const auto inputs = embed(fresh, 64, m);
  for (auto _ : state) {
    benchmark::DoNotOptimize(layer_forward(m, 0, inputs, store.view(0)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_LayerForward)->Arg(1)->Arg(2)->Arg(4)->Arg(6);

void BM_FinalDistribution(benchmark::State& state) {
  const TransformerModel& m = toy_model();
  std::vector<double> h(m.config.hidden_dim, 0.25);
  for (auto _ : state) benchmark::DoNotOptimize(final_distribution(h, m));
}
BENCHMARK(BM_FinalDistribution);

void BM_VanillaDecode(benchmark::State& state) {
  const TransformerModel& m = toy_model();
  const std::vector<TokenId> prompt{5, 6, 7, 8};
  DecodeConfig c;
  c.max_new_tokens = 32;
  for (auto _ : state) benchmark::DoNotOptimize(vanilla_generate(m, prompt, c));
}
BENCHMARK(BM_VanillaDecode)->Unit(benchmark::kMillisecond);

// Identity heads on an untrained model exit often at gamma 0, which
// exercises the pending ledger and verification paths.
void BM_AdaDecode(benchmark::State& state) {
  const TransformerModel& m = toy_model();
  const auto layers = default_exit_layers(m.config.num_layers);
  const HeadSet heads = HeadSet::identity(layers, m.config.hidden_dim);
  const std::vector<TokenId> prompt{5, 6, 7, 8};
  DecodeConfig c;
  c.gamma = static_cast<double>(state.range(0)) / 100.0;
  c.max_new_tokens = 32;
  for (auto _ : state) benchmark::DoNotOptimize(adadecode_generate(m, heads, prompt, c));
}
BENCHMARK(BM_AdaDecode)->Arg(0)->Arg(75)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
