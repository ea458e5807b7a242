// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Little-endian binary helpers and the SDT1 tensor encoding:
//   "SDT1" | u8 dtype (0 = f64) | u8 ndim | ndim x u64 extents | f64 payload

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sdanet/tensor.hpp"

namespace sdanet {

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

/// Malformed or truncated container. `offset` is the byte position where decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::size_t offset, const std::string& what)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void magic(std::string_view m) { bytes(m.data(), m.size()); }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void str(std::string_view s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }

  [[nodiscard]] const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  [[nodiscard]] std::size_t offset() const noexcept { return pos_; }
  [[nodiscard]] bool at_end() const noexcept { return pos_ == data_.size(); }

  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw FormatError(pos_, std::string("truncated input while reading ") + what);
    }
  }
  void read(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  void expect_magic(std::string_view m) {
    const std::size_t at = pos_;
    need(m.size(), "magic");
    if (std::memcmp(data_.data() + pos_, m.data(), m.size()) != 0) {
      throw FormatError(at, "bad magic, expected \"" + std::string(m) + "\"");
    }
    pos_ += m.size();
  }
  std::uint8_t u8(const char* what) {
    std::uint8_t v;
    read(&v, 1, what);
    return v;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    read(&v, 4, what);
    return v;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    read(&v, 8, what);
    return v;
  }
  std::string str(const char* what) {
    const std::size_t at = pos_;
    const std::uint64_t n = u64(what);
    if (n > data_.size() - pos_) throw FormatError(at, std::string("length prefix of ") + what + " exceeds input");
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline void write_tensor(ByteWriter& w, const Tensor& t) {
  w.magic("SDT1");
  w.u8(0);
  if (t.rank() > 255) throw std::invalid_argument("tensor rank exceeds 255");
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (auto e : t.shape()) w.u64(e);
  w.bytes(t.ptr(), t.size() * sizeof(double));
}

inline Tensor read_tensor(ByteReader& r) {
  r.expect_magic("SDT1");
  const std::size_t dt_at = r.offset();
  if (const auto dt = r.u8("dtype"); dt != 0) {
    throw FormatError(dt_at, "unsupported dtype code " + std::to_string(dt));
  }
  const std::size_t nd = r.u8("ndim");
  Shape s(nd);
  std::size_t count = 1;
  for (auto& e : s) {
    const std::size_t at = r.offset();
    e = r.u64("extent");
    if (e != 0 && count > (std::size_t{1} << 40) / e) throw FormatError(at, "tensor extent too large");
    count *= e;
  }
  r.need(count * sizeof(double), "tensor payload");
  Tensor t(s);
  r.read(t.ptr(), count * sizeof(double), "tensor payload");
  return t;
}

inline std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  ByteWriter w;
  write_tensor(w, t);
  return w.buffer();
}

inline Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Tensor t = read_tensor(r);
  if (!r.at_end()) throw FormatError(r.offset(), "trailing bytes after tensor");
  return t;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes through a sibling temporary and renames, so a failed write never leaves a partial file.
inline void write_file_atomic(const std::filesystem::path& p, std::span<const std::uint8_t> bytes) {
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, p, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + p.string());
  }
}

/// 64-bit FNV-1a; stable across platforms, used for data fingerprints.
class Fnv1a {
 public:
  void add(const void* p, std::size_t n) {
    const auto* c = static_cast<const std::uint8_t*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= c[i];
      h_ *= 0x100000001b3ull;
    }
  }
  void add(const Tensor& t) { add(t.ptr(), t.size() * sizeof(double)); }
  void add(std::uint64_t v) { add(&v, sizeof v); }
  [[nodiscard]] std::uint64_t value() const noexcept { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ull;
};

}  // namespace sdanet
