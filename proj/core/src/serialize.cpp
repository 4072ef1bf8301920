// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adadecode/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "adadecode/error.hpp"

namespace adadecode {

namespace {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_f64(std::ostream& os, std::span<const double> values) {
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::uint32_t checked_u32(std::size_t v) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw InvalidArgument("value exceeds u32");
  return static_cast<std::uint32_t>(v);
}

// Tracks the byte offset so every failure can name where it happened.
class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::size_t offset() const noexcept { return offset_; }

  void bytes(void* out, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(out), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw FormatError(std::string("truncated input while reading ") + what,
                        offset_ + static_cast<std::size_t>(is_.gcount()));
    }
    offset_ += n;
  }

  std::uint32_t u32(const char* what) {
    std::uint32_t v = 0;
    bytes(&v, sizeof v, what);
    return v;
  }

  void magic(const char (&expected)[5]) {
    char got[4];
    const std::size_t at = offset_;
    bytes(got, 4, "magic");
    if (std::memcmp(got, expected, 4) != 0) {
      throw FormatError(std::string("bad magic, expected ") + expected, at);
    }
  }

  void version() {
    const std::size_t at = offset_;
    const std::uint32_t v = u32("version");
    if (v != kContainerVersion) {
      throw FormatError("unsupported container version " + std::to_string(v), at);
    }
  }

  void f64s(std::span<double> out, const char* what) {
    const std::size_t at = offset_;
    bytes(out.data(), out.size() * sizeof(double), what);
    if (!all_finite(out)) throw FormatError(std::string("non-finite value in ") + what, at);
  }

  void expect_end() {
    if (is_.peek() != std::char_traits<char>::eof()) {
      throw FormatError("trailing bytes after container", offset_);
    }
  }

 private:
  std::istream& is_;
  std::size_t offset_ = 0;
};

}  // namespace

void write_model(std::ostream& os, const TransformerModel& model) {
  const ModelConfig& c = model.config;
  os.write("ADKW", 4);
  put_u32(os, kContainerVersion);
  for (std::size_t v : {c.num_layers, c.hidden_dim, c.num_attn_heads, c.vocab_size,
                        c.max_positions, c.mlp_ratio}) {
    put_u32(os, checked_u32(v));
  }
  for_each_tensor(model, [&](const Matrix& m) {
    put_u32(os, checked_u32(m.rows()));
    put_u32(os, checked_u32(m.cols()));
    put_f64(os, m.data());
  });
}

TransformerModel read_model(std::istream& is) {
  Reader r(is);
  r.magic("ADKW");
  r.version();
  const std::size_t config_at = r.offset();
  ModelConfig c;
  c.num_layers = r.u32("num_layers");
  c.hidden_dim = r.u32("hidden_dim");
  c.num_attn_heads = r.u32("num_attn_heads");
  c.vocab_size = r.u32("vocab_size");
  c.max_positions = r.u32("max_positions");
  c.mlp_ratio = r.u32("mlp_ratio");
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what(), config_at);
  }
  TransformerModel model = zero_model(c);
  for_each_tensor(model, [&](Matrix& m) {
    const std::size_t at = r.offset();
    const std::uint32_t rows = r.u32("tensor rows");
    const std::uint32_t cols = r.u32("tensor cols");
    if (rows != m.rows() || cols != m.cols()) {
      throw FormatError("tensor shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                            " does not match expected " + std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()),
                        at);
    }
    r.f64s(m.data(), "tensor data");
  });
  r.expect_end();
  return model;
}

void write_heads(std::ostream& os, const HeadSet& heads) {
  os.write("ADKH", 4);
  put_u32(os, kContainerVersion);
  put_u32(os, checked_u32(heads.size()));
  for (const auto& h : heads.heads()) {
    put_u32(os, checked_u32(h.exit_layer));
    put_u32(os, checked_u32(h.transform.rows()));
    put_f64(os, h.transform.data());
  }
}

HeadSet read_heads(std::istream& is) {
  Reader r(is);
  r.magic("ADKH");
  r.version();
  const std::uint32_t count = r.u32("head count");
  std::vector<IntermediateHead> heads;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    IntermediateHead h;
    h.exit_layer = r.u32("exit_layer");
    const std::uint32_t d = r.u32("head width");
    if (d == 0 || d > 1u << 14) throw FormatError("implausible head width", at + 4);
    h.transform = Matrix(d, d);
    r.f64s(h.transform.data(), "head transform");
    heads.push_back(std::move(h));
  }
  r.expect_end();
  try {
    return HeadSet(std::move(heads));
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what(), 12);
  }
}

void write_token_lines(std::ostream& os, std::span<const TokenSequence> sequences) {
  for (const auto& seq : sequences) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i) os << ' ';
      os << seq[i];
    }
    os << '\n';
  }
}

std::vector<TokenSequence> read_token_lines(std::istream& is) {
  std::vector<TokenSequence> out;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(is, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    TokenSequence seq;
    std::size_t i = 0;
    while (i < line.size()) {
      if (line[i] == ' ' || line[i] == '\t' || line[i] == '\r') {
        ++i;
        continue;
      }
      std::uint64_t value = 0;
      const std::size_t start = i;
      while (i < line.size() && line[i] >= '0' && line[i] <= '9') {
        value = value * 10 + static_cast<std::uint64_t>(line[i] - '0');
        if (value > std::numeric_limits<TokenId>::max()) {
          throw FormatError("token id out of range", line_start + start);
        }
        ++i;
      }
      if (i == start || (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r')) {
        throw FormatError("expected a decimal token id", line_start + i);
      }
      seq.push_back(static_cast<TokenId>(value));
    }
    if (!seq.empty()) out.push_back(std::move(seq));
  }
  return out;
}

void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer, bool binary) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    writer(os);
    os.flush();
    if (!os) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw Error("write failed for " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error("cannot rename into " + path.string());
  }
}

namespace {

std::ifstream open_input(const std::filesystem::path& path, bool binary) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw Error("cannot open " + path.string());
  return is;
}

}  // namespace

TransformerModel load_model(const std::filesystem::path& path) {
  auto is = open_input(path, true);
  return read_model(is);
}

HeadSet load_heads(const std::filesystem::path& path) {
  auto is = open_input(path, true);
  return read_heads(is);
}

std::vector<TokenSequence> load_token_lines(const std::filesystem::path& path) {
  auto is = open_input(path, false);
  return read_token_lines(is);
}

}  // namespace adadecode
