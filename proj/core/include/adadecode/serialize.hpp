// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

// On-disk formats.
//
// Model container (little-endian):
//   "ADKW", u32 version = 1,
//   u32 num_layers, hidden_dim, num_attn_heads, vocab_size, max_positions,
//       mlp_ratio,
//   then every tensor in for_each_tensor order, each as
//   u32 rows, u32 cols, rows·cols f64 row-major.
//
// Heads container (little-endian):
//   "ADKH", u32 version = 1, u32 head count,
//   per head: u32 exit_layer, u32 d, d·d f64 row-major.
//
// Token files (corpus, prompts): UTF-8 text, one sequence per line, tokens
// as space-separated decimal ids.

#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

#include "adadecode/heads.hpp"
#include "adadecode/model.hpp"
#include "adadecode/train.hpp"

namespace adadecode {

inline constexpr std::uint32_t kContainerVersion = 1;

void write_model(std::ostream& os, const TransformerModel& model);
/// Throws FormatError carrying the byte offset of the first violation.
TransformerModel read_model(std::istream& is);

void write_heads(std::ostream& os, const HeadSet& heads);
HeadSet read_heads(std::istream& is);

void write_token_lines(std::ostream& os, std::span<const TokenSequence> sequences);
/// Blank lines are skipped. Throws FormatError on a non-numeric token.
std::vector<TokenSequence> read_token_lines(std::istream& is);

/// Writes through a sibling temporary file and renames it over `path`, so a
/// reader never observes a partially written file. Throws Error on I/O
/// failure.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer, bool binary);

TransformerModel load_model(const std::filesystem::path& path);
HeadSet load_heads(const std::filesystem::path& path);
std::vector<TokenSequence> load_token_lines(const std::filesystem::path& path);

}  // namespace adadecode
