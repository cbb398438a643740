// Copyright 2026 The L2T Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Binary checkpoint container.
//
//   magic        8 bytes  "L2TCKPT\0"
//   version      u32
//   arch         u32
//   arch_meta    context_window, hidden, layers, features, ngram_order (i32),
//                vocabulary (size, open, close, answer, eos as i32, -1 for
//                absent delimiters; then one length-prefixed string per symbol)
//   step         i64
//   d            u64
//   params       d x f64
//   has_basis    u8
//   [basis]      rows u64, rank i32, built_at_step i32, window i32,
//                coordinate_scale f64,
//                rows*rank x f64 column-major
//
// All integers and doubles are little-endian regardless of host order.

#ifndef L2T_CHECKPOINT_HPP_
#define L2T_CHECKPOINT_HPP_

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "l2t/common.hpp"
#include "l2t/lowrank.hpp"
#include "l2t/policy.hpp"

namespace l2t {

inline constexpr std::array<char, 8> kCheckpointMagic = {'L', '2', 'T', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  PolicyParams params;
  std::optional<ProxyBasis> basis;
  std::int64_t step = 0;
};

namespace detail {

class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& os) : os_(os) {}

  void raw(const char* p, std::size_t n) { os_.write(p, static_cast<std::streamsize>(n)); }
  void u8(std::uint8_t v) { raw(reinterpret_cast<const char*>(&v), 1); }
  void u32(std::uint32_t v) { le(v); }
  void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v)); }
  void u64(std::uint64_t v) { le(v); }
  void i64(std::int64_t v) { le(static_cast<std::uint64_t>(v)); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

 private:
  template <typename U>
  void le(U v) {
    char b[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    raw(b, sizeof(U));
  }
  std::ostream& os_;
};

class ByteReader {
 public:
  explicit ByteReader(std::istream& is) : is_(is) {}

  void raw(char* p, std::size_t n) {
    is_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw Error("checkpoint truncated");
  }
  std::uint8_t u8() {
    char c;
    raw(&c, 1);
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(le<std::uint32_t>()); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  std::int64_t i64() { return static_cast<std::int64_t>(le<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 20)) throw Error("checkpoint string too long");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

 private:
  template <typename U>
  U le() {
    unsigned char b[sizeof(U)];
    raw(reinterpret_cast<char*>(b), sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
  }
  std::istream& is_;
};

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  validate(c.params);
  detail::ByteWriter w(os);
  const ArchMeta& m = c.params.meta;
  w.raw(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(m.arch));
  w.i32(m.context_window);
  w.i32(m.hidden);
  w.i32(m.layers);
  w.i32(static_cast<std::int32_t>(m.features));
  w.i32(m.ngram_order);
  w.i32(m.vocab.size);
  w.i32(m.vocab.episode_open ? *m.vocab.episode_open : -1);
  w.i32(m.vocab.episode_close ? *m.vocab.episode_close : -1);
  w.i32(m.vocab.answer);
  w.i32(m.vocab.eos);
  w.u32(static_cast<std::uint32_t>(m.vocab.symbols.size()));
  for (const auto& s : m.vocab.symbols) w.str(s);
  w.i64(c.step);
  w.u64(c.params.dim());
  for (Eigen::Index i = 0; i < c.params.values.size(); ++i) w.f64(c.params.values[i]);
  w.u8(c.basis ? 1 : 0);
  if (c.basis) {
    const ProxyBasis& b = *c.basis;
    require(b.dim() == c.params.dim(), "basis does not match parameter dimension");
    w.u64(static_cast<std::uint64_t>(b.basis.rows()));
    w.i32(static_cast<std::int32_t>(b.basis.cols()));
    w.i32(b.built_at_step);
    w.i32(b.window);
    w.f64(b.coordinate_scale);
    for (Eigen::Index j = 0; j < b.basis.cols(); ++j)
      for (Eigen::Index i = 0; i < b.basis.rows(); ++i) w.f64(b.basis(i, j));
  }
  if (!os) throw Error("checkpoint write failed");
}

inline Checkpoint read_checkpoint(std::istream& is) {
  detail::ByteReader r(is);
  std::array<char, 8> magic{};
  r.raw(magic.data(), magic.size());
  if (magic != kCheckpointMagic) throw Error("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                std::to_string(kCheckpointVersion) + ")");
  Checkpoint c;
  ArchMeta& m = c.params.meta;
  const std::uint32_t arch = r.u32();
  if (arch > 1) throw Error("unknown architecture " + std::to_string(arch));
  m.arch = static_cast<Arch>(arch);
  m.context_window = r.i32();
  m.hidden = r.i32();
  m.layers = r.i32();
  const std::int32_t features = r.i32();
  if (features < 0 || features > 1) throw Error("unknown feature set");
  m.features = static_cast<FeatureSet>(features);
  m.ngram_order = r.i32();
  m.vocab.size = r.i32();
  const std::int32_t open = r.i32();
  const std::int32_t close = r.i32();
  if (open >= 0) m.vocab.episode_open = open;
  if (close >= 0) m.vocab.episode_close = close;
  m.vocab.answer = r.i32();
  m.vocab.eos = r.i32();
  const std::uint32_t nsym = r.u32();
  if (nsym > 4096) throw Error("checkpoint vocabulary too large");
  for (std::uint32_t i = 0; i < nsym; ++i) m.vocab.symbols.push_back(r.str());
  c.step = r.i64();
  const std::uint64_t d = r.u64();
  if (d != parameter_count(m)) throw Error("parameter count does not match architecture");
  c.params.values.resize(static_cast<Eigen::Index>(d));
  for (std::uint64_t i = 0; i < d; ++i) c.params.values[static_cast<Eigen::Index>(i)] = r.f64();
  validate(c.params);
  if (r.u8() != 0) {
    const std::uint64_t rows = r.u64();
    const std::int32_t rank = r.i32();
    if (rows != d || rank < 1 || static_cast<std::uint64_t>(rank) > d)
      throw Error("basis does not match parameter dimension");
    ProxyBasis b;
    b.rank = rank;
    b.built_at_step = r.i32();
    b.window = r.i32();
    b.coordinate_scale = r.f64();
    if (!(b.coordinate_scale >= 1.0) || !std::isfinite(b.coordinate_scale))
      throw Error("invalid basis coordinate scale");
    b.basis.resize(static_cast<Eigen::Index>(rows), rank);
    for (Eigen::Index j = 0; j < rank; ++j)
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(rows); ++i) b.basis(i, j) = r.f64();
    c.basis = std::move(b);
  }
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_checkpoint(os, c);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_checkpoint(is);
}

}  // namespace l2t

#endif  // L2T_CHECKPOINT_HPP_
