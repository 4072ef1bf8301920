// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adadecode/bench.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>

#include "adadecode/error.hpp"
#include "adadecode/kv_ledger.hpp"

namespace adadecode {

MarkovChain MarkovChain::generate(std::size_t vocab_size, double skew, Rng& rng) {
  if (vocab_size < 2) throw InvalidArgument("MarkovChain: vocab_size must be >= 2");
  if (!(skew >= 0.0 && skew <= 1.0)) throw InvalidArgument("MarkovChain: skew must lie in [0, 1]");
  MarkovChain chain;
  chain.vocab_size = vocab_size;
  chain.dominant.assign(vocab_size, -1);
  const std::uint64_t body = vocab_size - 1;
  for (std::size_t s = 1; s < vocab_size; ++s) {
    const bool skewed = rng.uniform() < skew;
    const auto target = static_cast<std::int64_t>(1 + rng.below(body));
    if (skewed) chain.dominant[s] = target;
  }
  return chain;
}

TokenId MarkovChain::start(Rng& rng) const {
  return static_cast<TokenId>(1 + rng.below(vocab_size - 1));
}

TokenId MarkovChain::next(TokenId current, Rng& rng) const {
  const double u = rng.uniform();
  const std::int64_t d = current < dominant.size() ? dominant[current] : -1;
  if (d >= 0 && u < kDominantProbability) return static_cast<TokenId>(d);
  return static_cast<TokenId>(1 + rng.below(vocab_size - 1));
}

Corpus gen_corpus(std::size_t vocab_size, std::size_t num_sequences, std::size_t length,
                  double skew, Rng& rng) {
  const MarkovChain chain = MarkovChain::generate(vocab_size, skew, rng);
  Corpus corpus;
  corpus.seed = rng.seed();
  corpus.skew = skew;
  corpus.vocab_size = vocab_size;
  corpus.sequences.reserve(num_sequences);
  for (std::size_t i = 0; i < num_sequences; ++i) {
    TokenSequence seq;
    seq.reserve(length);
    if (length > 0) seq.push_back(chain.start(rng));
    while (seq.size() < length) seq.push_back(chain.next(seq.back(), rng));
    corpus.sequences.push_back(std::move(seq));
  }
  return corpus;
}

std::vector<double> default_gamma_grid() { return {0.0, 0.2, 0.4, 0.6, 0.75, 0.8, 0.85, 1.0}; }

SweepRow measure_point(const TransformerModel& model, const HeadSet& heads,
                       std::span<const TokenSequence> prompts, double gamma,
                       const DecodeConfig& config, std::span<const DecodeOutput> vanilla) {
  if (prompts.empty()) throw InvalidArgument("measure_point: no prompts");
  if (vanilla.size() != prompts.size()) {
    throw InvalidArgument("measure_point: one vanilla output per prompt required");
  }
  DecodeConfig cfg = config;
  cfg.gamma = gamma;
  cfg.validate();
  SweepRow row;
  row.gamma = gamma;
  std::size_t matches = 0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const DecodeOutput ada = adadecode_generate(model, heads, prompts[i], cfg);
    row.adadecode += ada.stats;
    row.vanilla += vanilla[i].stats;
    if (ada.tokens == vanilla[i].tokens) ++matches;
  }
  const DecodeStats& a = row.adadecode;
  row.throughput_tokens_per_sec = a.wall_seconds > 0.0 ? throughput(a) : 0.0;
  row.invocation_ratio = row.vanilla.layer_invocations == 0
                             ? 1.0
                             : static_cast<double>(a.layer_invocations) /
                                   static_cast<double>(row.vanilla.layer_invocations);
  row.early_rate = a.tokens_emitted == 0 ? 0.0
                                         : static_cast<double>(a.early_predictions) /
                                               static_cast<double>(a.tokens_emitted);
  row.reject_rate = static_cast<double>(a.rejections) /
                    static_cast<double>(std::max<std::uint64_t>(1, a.early_predictions));
  row.consistency = static_cast<double>(matches) / static_cast<double>(prompts.size());
  return row;
}

namespace {

std::vector<DecodeOutput> run_vanilla(const TransformerModel& model,
                                      std::span<const TokenSequence> prompts,
                                      const DecodeConfig& config) {
  std::vector<DecodeOutput> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) out.push_back(vanilla_generate(model, p, config));
  return out;
}

}  // namespace

SweepRow measure_point(const TransformerModel& model, const HeadSet& heads,
                       std::span<const TokenSequence> prompts, double gamma,
                       const DecodeConfig& config) {
  return measure_point(model, heads, prompts, gamma, config, run_vanilla(model, prompts, config));
}

std::vector<SweepRow> run_sweep(const TransformerModel& model, const HeadSet& heads,
                                std::span<const TokenSequence> prompts,
                                std::span<const double> gammas, const DecodeConfig& config) {
  for (double g : gammas) {
    if (!(g >= 0.0 && g <= 1.0)) throw InvalidArgument("run_sweep: gamma outside [0, 1]");
  }
  const auto vanilla = run_vanilla(model, prompts, config);
  std::vector<SweepRow> rows;
  rows.reserve(gammas.size());
  for (double g : gammas) rows.push_back(measure_point(model, heads, prompts, g, config, vanilla));
  return rows;
}

void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  os << kSweepCsvHeader << '\n';
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%.6f,%.3f,%.6f,%.6f,%.6f,%.6f\n", r.gamma,
                  r.throughput_tokens_per_sec, r.invocation_ratio, r.early_rate, r.reject_rate,
                  r.consistency);
    os << line;
  }
}

std::vector<HeatmapCell> measure_confidence_heatmap(const TransformerModel& model,
                                                    const HeadSet& heads,
                                                    std::span<const TokenId> prompt,
                                                    std::size_t max_new) {
  heads.validate_for(model.config);
  const TokenSequence p(prompt.begin(), prompt.end());
  const auto layers = heads.exit_layers();
  const DistillData data = collect_distill_data(model, std::span(&p, 1), layers, max_new);
  std::vector<HeatmapCell> cells;
  for (std::size_t k = 0; k < data.num_positions(); ++k) {
    const TokenId chosen = data.generated[k];
    const std::size_t position = prompt.size() + k;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const ProbVector q = head_distribution(data.samples[i][k].hidden, heads.heads()[i], model);
      cells.push_back({position, layers[i], q[chosen]});
    }
    const ProbVector p_star = final_distribution(data.final_hidden[k], model);
    cells.push_back({position, model.config.num_layers, p_star[chosen]});
  }
  return cells;
}

void write_heatmap_csv(std::ostream& os, std::span<const HeatmapCell> cells) {
  os << kHeatmapCsvHeader << '\n';
  char line[128];
  for (const auto& c : cells) {
    std::snprintf(line, sizeof line, "%zu,%zu,%.9f\n", c.position, c.layer, c.probability);
    os << line;
  }
}

Workload build_workload(const WorkloadOptions& options) {
  const Rng root(options.seed);
  Rng corpus_rng = root.split(streams::kCorpus);
  Corpus all = gen_corpus(options.model.vocab_size,
                          options.train_sequences + options.heldout_sequences,
                          options.sequence_length, options.skew, corpus_rng);
  Workload w;
  w.corpus = all;
  w.corpus.sequences.resize(options.train_sequences);
  for (std::size_t i = options.train_sequences; i < all.sequences.size(); ++i) {
    const auto& seq = all.sequences[i];
    const std::size_t len = std::min(options.prompt_length, seq.size());
    w.prompts.emplace_back(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(len));
  }
  Rng init_rng = root.split(streams::kInit);
  const TransformerModel base = init_random_model(options.model, init_rng);
  Rng pretrain_rng = root.split(streams::kPretrain);
  w.pretrain = pretrain_base(base, w.corpus.sequences, options.pretrain, pretrain_rng);
  Rng heads_rng = root.split(streams::kHeads);
  const auto layers = default_exit_layers(options.model.num_layers);
  w.heads = train_heads(w.pretrain.model, w.corpus.sequences, layers, options.heads, heads_rng);
  return w;
}

double throughput(const DecodeStats& stats) {
  if (!(stats.wall_seconds > 0.0)) throw InvalidArgument("throughput: zero duration");
  return static_cast<double>(stats.tokens_emitted) / stats.wall_seconds;
}

void write_stats(std::ostream& os, const DecodeStats& s, bool include_timing) {
  os << "layer_invocations=" << s.layer_invocations << '\n'
     << "early_predictions=" << s.early_predictions << '\n'
     << "rejections=" << s.rejections << '\n'
     << "tokens_emitted=" << s.tokens_emitted << '\n';
  if (include_timing) {
    char wall[64];
    std::snprintf(wall, sizeof wall, "%.6f", s.wall_seconds);
    os << "wall_seconds=" << wall << '\n';
  }
  os << "prefill_invocations=" << s.prefill_invocations << '\n';
}

DecodeStats parse_stats(std::istream& is) {
  DecodeStats s;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "layer_invocations") s.layer_invocations = std::stoull(value);
      else if (key == "early_predictions") s.early_predictions = std::stoull(value);
      else if (key == "rejections") s.rejections = std::stoull(value);
      else if (key == "tokens_emitted") s.tokens_emitted = std::stoull(value);
      else if (key == "wall_seconds") s.wall_seconds = std::stod(value);
      else if (key == "prefill_invocations") s.prefill_invocations = std::stoull(value);
    } catch (const std::exception&) {
      throw InvalidArgument("parse_stats: bad value for " + key);
    }
  }
  return s;
}

}  // namespace adadecode
