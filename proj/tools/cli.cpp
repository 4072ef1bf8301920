// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "adadecode/bench.hpp"
#include "adadecode/decode.hpp"
#include "adadecode/error.hpp"
#include "adadecode/heads.hpp"
#include "adadecode/model.hpp"
#include "adadecode/rng.hpp"
#include "adadecode/serialize.hpp"
#include "adadecode/train.hpp"

namespace adadecode::cli {
namespace {

namespace fs = std::filesystem;

// Usage problems detected after CLI11 has accepted the flags.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct DecodeFlags {
  std::string model;
  std::string heads;
  std::string prompt_file;
  double gamma = 0.75;
  std::size_t max_pending = 5;
  std::size_t max_new = 512;
  std::uint64_t seed = 0;
  std::string sampler = "greedy";

  void add_to(CLI::App* cmd, bool heads_required) {
    cmd->add_option("--model", model, "Model container (ADKW)")->required();
    auto* h = cmd->add_option("--heads", heads, "Heads container (ADKH)");
    if (heads_required) h->required();
    cmd->add_option("--prompt-file", prompt_file, "Prompts, one per line")->required();
    cmd->add_option("--gamma", gamma, "Early-prediction threshold")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--max-pending", max_pending, "Cap on outstanding early predictions")
        ->capture_default_str();
    cmd->add_option("--max-new", max_new, "Token budget per prompt")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Sampling seed")->capture_default_str();
    cmd->add_option("--sampler", sampler, "greedy or categorical")
        ->capture_default_str()
        ->check(CLI::IsMember({"greedy", "categorical"}));
  }

  DecodeConfig config() const {
    DecodeConfig c;
    c.gamma = gamma;
    c.max_pending = max_pending;
    c.max_new_tokens = max_new;
    c.seed = seed;
    c.sampler = sampler == "categorical" ? Sampler::categorical : Sampler::greedy;
    return c;
  }
};

void print_tokens(std::ostream& out, std::span<const TokenId> tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) out << (i ? " " : "") << tokens[i];
  out << '\n';
}

std::vector<TokenSequence> load_prompts(const std::string& path) {
  auto prompts = load_token_lines(path);
  if (prompts.empty()) throw InvalidArgument("prompt file " + path + " has no prompts");
  for (const auto& p : prompts) {
    if (p.empty()) throw InvalidArgument("prompt file " + path + " has an empty line");
  }
  return prompts;
}

void write_text(const std::string& path, const std::function<void(std::ostream&)>& writer) {
  atomic_write(path, writer, false);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"AdaDecode toy inference engine", "adadecode"};
  app.require_subcommand(1);
  std::function<void()> action;

  // gen-corpus
  struct {
    std::uint64_t seed = 0;
    std::size_t vocab = 256, n = 200, len = 128;
    double skew = 0.7;
    std::string out;
  } gc;
  auto* gen = app.add_subcommand("gen-corpus", "Sample a synthetic Markov corpus");
  gen->add_option("--seed", gc.seed)->capture_default_str();
  gen->add_option("--vocab", gc.vocab, "Vocabulary size (id 0 is EOS)")
      ->capture_default_str()
      ->check(CLI::Range(std::size_t{2}, std::size_t{1} << 31));
  gen->add_option("--n", gc.n, "Number of sequences")->capture_default_str();
  gen->add_option("--len", gc.len, "Tokens per sequence")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  gen->add_option("--skew", gc.skew, "Fraction of states with a dominant successor")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--out", gc.out, "Corpus file")->required();
  gen->callback([&] {
    action = [&] {
      Rng rng = Rng(gc.seed).split(streams::kCorpus);
      const Corpus corpus = gen_corpus(gc.vocab, gc.n, gc.len, gc.skew, rng);
      write_text(gc.out, [&](std::ostream& os) { write_token_lines(os, corpus.sequences); });
      out << "sequences=" << corpus.sequences.size() << '\n';
    };
  });

  // pretrain
  struct {
    std::string corpus, out;
    std::uint64_t seed = 0;
    ModelConfig config;
    PretrainOptions options{6, 0.5, 4};
  } pt;
  auto* pre = app.add_subcommand("pretrain", "Initialize and train the base model");
  pre->add_option("--corpus", pt.corpus, "Corpus file")->required();
  pre->add_option("--out", pt.out, "Model container to write")->required();
  pre->add_option("--seed", pt.seed)->capture_default_str();
  pre->add_option("--layers", pt.config.num_layers)->capture_default_str();
  pre->add_option("--dim", pt.config.hidden_dim)->capture_default_str();
  pre->add_option("--attn-heads", pt.config.num_attn_heads)->capture_default_str();
  pre->add_option("--vocab", pt.config.vocab_size)->capture_default_str();
  pre->add_option("--max-positions", pt.config.max_positions)->capture_default_str();
  pre->add_option("--mlp-ratio", pt.config.mlp_ratio)->capture_default_str();
  pre->add_option("--epochs", pt.options.epochs)->capture_default_str();
  pre->add_option("--lr", pt.options.learning_rate)->capture_default_str();
  pre->add_option("--batch-size", pt.options.batch_size)->capture_default_str();
  pre->callback([&] {
    action = [&] {
      try {
        pt.config.validate();
      } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
      }
      const auto corpus = load_token_lines(pt.corpus);
      const Rng root(pt.seed);
      Rng init_rng = root.split(streams::kInit);
      const TransformerModel base = init_random_model(pt.config, init_rng);
      Rng train_rng = root.split(streams::kPretrain);
      const PretrainResult result = pretrain_base(base, corpus, pt.options, train_rng);
      atomic_write(pt.out, [&](std::ostream& os) { write_model(os, result.model); }, true);
      const double final_loss =
          result.epoch_losses.empty() ? result.initial_loss : result.epoch_losses.back();
      out << "initial_loss=" << fixed(result.initial_loss) << '\n'
          << "final_loss=" << fixed(final_loss) << '\n';
    };
  });

  // train-heads
  struct {
    std::string model, corpus, out, trace;
    std::uint64_t seed = 0;
    std::vector<std::size_t> exit_layers;
    HeadTrainingOptions options;
  } th;
  auto* trh = app.add_subcommand("train-heads", "Distill intermediate heads from a frozen model");
  trh->add_option("--model", th.model, "Model container")->required();
  trh->add_option("--corpus", th.corpus, "Corpus file (prompt source)")->required();
  trh->add_option("--out", th.out, "Heads container to write")->required();
  trh->add_option("--trace-out", th.trace, "KL trace CSV (default: <out>.kl.csv)");
  trh->add_option("--seed", th.seed)->capture_default_str();
  trh->add_option("--exit-layers", th.exit_layers, "Comma-separated (default L/4,L/2,3L/4)")
      ->delimiter(',');
  trh->add_option("--epochs", th.options.epochs)->capture_default_str();
  trh->add_option("--lr", th.options.learning_rate)->capture_default_str();
  trh->add_option("--num-prompts", th.options.num_prompts)->capture_default_str();
  trh->add_option("--prompt-len", th.options.prompt_length)->capture_default_str();
  trh->add_option("--rollout", th.options.rollout_length)->capture_default_str();
  trh->callback([&] {
    action = [&] {
      const TransformerModel model = load_model(th.model);
      const auto corpus = load_token_lines(th.corpus);
      const auto layers =
          th.exit_layers.empty() ? default_exit_layers(model.config.num_layers) : th.exit_layers;
      Rng rng = Rng(th.seed).split(streams::kHeads);
      const HeadTrainingResult result = train_heads(model, corpus, layers, th.options, rng);
      atomic_write(th.out, [&](std::ostream& os) { write_heads(os, result.heads); }, true);
      const std::string trace = th.trace.empty() ? th.out + ".kl.csv" : th.trace;
      write_text(trace, [&](std::ostream& os) {
        os << "epoch,mean_kl";
        for (auto l : layers) os << ",kl_layer_" << l;
        os << '\n';
        const std::size_t n = result.kl_trace.empty() ? 0 : result.kl_trace.front().size();
        for (std::size_t e = 0; e < n; ++e) {
          double sum = 0.0;
          for (const auto& t : result.kl_trace) sum += t[e];
          os << e << ',' << fixed(sum / static_cast<double>(result.kl_trace.size()), 9);
          for (const auto& t : result.kl_trace) os << ',' << fixed(t[e], 9);
          os << '\n';
        }
      });
      for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& t = result.kl_trace[i];
        out << "kl_layer_" << layers[i] << '=' << fixed(t.front()) << "->" << fixed(t.back())
            << '\n';
      }
    };
  });

  // generate
  DecodeFlags gen_flags;
  std::string mode = "adadecode";
  bool timing = false;
  auto* generate = app.add_subcommand("generate", "Decode continuations of each prompt");
  gen_flags.add_to(generate, false);
  generate->add_option("--mode", mode, "vanilla or adadecode")
      ->capture_default_str()
      ->check(CLI::IsMember({"vanilla", "adadecode"}));
  generate->add_flag("--timing", timing, "Also report wall_seconds");
  generate->callback([&] {
    action = [&] {
      if (mode == "adadecode" && gen_flags.heads.empty()) {
        throw UsageError("--mode adadecode requires --heads");
      }
      const TransformerModel model = load_model(gen_flags.model);
      const auto prompts = load_prompts(gen_flags.prompt_file);
      const DecodeConfig config = gen_flags.config();
      std::optional<HeadSet> heads;
      if (mode == "adadecode") heads = load_heads(gen_flags.heads);
      DecodeStats total;
      for (const auto& p : prompts) {
        const DecodeOutput o = heads ? adadecode_generate(model, *heads, p, config)
                                     : vanilla_generate(model, p, config);
        print_tokens(out, o.tokens);
        total += o.stats;
      }
      write_stats(out, total, timing);
    };
  });

  // bench
  DecodeFlags bench_flags;
  bench_flags.max_new = 128;
  std::string bench_out, heatmap_out;
  auto* bench = app.add_subcommand("bench", "Measure one operating point");
  bench_flags.add_to(bench, true);
  bench->add_option("--out", bench_out, "Sweep-format CSV with one row")->required();
  bench->add_option("--heatmap-out", heatmap_out, "Confidence heatmap CSV for the first prompt");
  bench->callback([&] {
    action = [&] {
      const TransformerModel model = load_model(bench_flags.model);
      const HeadSet heads = load_heads(bench_flags.heads);
      const auto prompts = load_prompts(bench_flags.prompt_file);
      const DecodeConfig config = bench_flags.config();
      const SweepRow row = measure_point(model, heads, prompts, config.gamma, config);
      write_text(bench_out, [&](std::ostream& os) { write_sweep_csv(os, std::span(&row, 1)); });
      if (!heatmap_out.empty()) {
        const auto cells =
            measure_confidence_heatmap(model, heads, prompts.front(), config.max_new_tokens);
        write_text(heatmap_out, [&](std::ostream& os) { write_heatmap_csv(os, cells); });
      }
      out << "invocation_ratio=" << fixed(row.invocation_ratio) << '\n'
          << "throughput_tps=" << fixed(row.throughput_tokens_per_sec, 1) << '\n';
      write_stats(out, row.adadecode);
    };
  });

  // sweep
  DecodeFlags sweep_flags;
  sweep_flags.max_new = 128;
  std::vector<double> gammas;
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep", "Measure a grid of gamma values");
  sweep_flags.add_to(sweep, true);
  sweep->add_option("--gammas", gammas, "Comma-separated grid (default 0,.2,.4,.6,.75,.8,.85,1)")
      ->delimiter(',')
      ->check(CLI::Range(0.0, 1.0));
  sweep->add_option("--out", sweep_out, "Sweep CSV")->required();
  sweep->callback([&] {
    action = [&] {
      const TransformerModel model = load_model(sweep_flags.model);
      const HeadSet heads = load_heads(sweep_flags.heads);
      const auto prompts = load_prompts(sweep_flags.prompt_file);
      const auto grid = gammas.empty() ? default_gamma_grid() : gammas;
      const auto rows = run_sweep(model, heads, prompts, grid, sweep_flags.config());
      write_text(sweep_out, [&](std::ostream& os) { write_sweep_csv(os, rows); });
      out << "rows=" << rows.size() << '\n';
    };
  });

  // parity
  DecodeFlags parity_flags;
  parity_flags.max_new = 128;
  bool no_verify = false;
  auto* parity = app.add_subcommand("parity", "Compare adadecode against vanilla decoding");
  parity_flags.add_to(parity, true);
  parity->add_flag("--no-verify", no_verify, "Diagnostic: accept every draft unchecked");
  parity->callback([&] {
    action = [&] {
      const TransformerModel model = load_model(parity_flags.model);
      const HeadSet heads = load_heads(parity_flags.heads);
      const auto prompts = load_prompts(parity_flags.prompt_file);
      DecodeConfig config = parity_flags.config();
      config.sampler = Sampler::greedy;
      config.verify = !no_verify;
      std::vector<std::size_t> diverging;
      const double ratio = consistency_ratio(model, heads, prompts, config, &diverging);
      out << "consistency=" << fixed(ratio) << '\n';
      out << "diverging=";
      for (std::size_t i = 0; i < diverging.size(); ++i) out << (i ? "," : "") << diverging[i];
      out << '\n';
    };
  });

  // rank-check
  std::string rank_model;
  auto* rank = app.add_subcommand("rank-check", "Singular-value report for the LM head");
  rank->add_option("--model", rank_model, "Model container")->required();
  rank->callback([&] {
    action = [&] {
      const RankReport r = rank_report(load_model(rank_model).lm_head);
      char smallest[64];
      std::snprintf(smallest, sizeof smallest, "%.6e", r.smallest);
      out << "shape=" << r.rows << 'x' << r.cols << '\n'
          << "singular_values=" << r.num_singular_values << '\n'
          << "non_zero_singular_values=" << r.num_nonzero << '\n'
          << "smallest_singular_value=" << smallest << '\n';
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    CLI::App* failing = &app;
    for (auto* sub : app.get_subcommands()) failing = sub;
    err << failing->help();
    return kExitUsage;
  }

  try {
    action();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace adadecode::cli
