#pragma once

#include <sodium.h>

#include <array>
#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pbill/error.hpp"

namespace pbill {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

// Arbitrary-precision non-negative integers (bills, group orders).
using BigInt = boost::multiprecision::cpp_int;

inline void ensure_sodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw Error(ErrorCode::kIo, "libsodium initialisation failed");
}

inline std::string to_hex(ByteView bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

inline Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw DecodeError("hex string has odd length");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw DecodeError("invalid hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

inline std::array<std::uint8_t, 32> sha256(ByteView data) {
  ensure_sodium();
  std::array<std::uint8_t, 32> out{};
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

inline std::array<std::uint8_t, 64> sha512(ByteView data) {
  ensure_sodium();
  std::array<std::uint8_t, 64> out{};
  crypto_hash_sha512(out.data(), data.data(), data.size());
  return out;
}

// Minimal big-endian magnitude; zero encodes as the empty string.
inline Bytes bigint_to_bytes(const BigInt& value) {
  if (value < 0) throw Error(ErrorCode::kInvalidArgument, "negative integer");
  Bytes out;
  if (value == 0) return out;
  boost::multiprecision::export_bits(value, std::back_inserter(out), 8, true);
  return out;
}

inline BigInt bigint_from_bytes(ByteView bytes) {
  BigInt value = 0;
  if (bytes.empty()) return value;
  boost::multiprecision::import_bits(value, bytes.begin(), bytes.end(), 8, true);
  return value;
}

inline BigInt parse_bigint(std::string_view decimal) {
  if (decimal.empty()) throw DecodeError("empty integer");
  for (char c : decimal) {
    if (c < '0' || c > '9') throw DecodeError("invalid decimal integer");
  }
  return BigInt(std::string(decimal));
}

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put_be(v, 2); }
  void u32(std::uint32_t v) { put_be(v, 4); }
  void u64(std::uint64_t v) { put_be(v, 8); }
  void raw(ByteView bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

  void str8(std::string_view s) {
    if (s.size() > 0xff) throw Error(ErrorCode::kInvalidArgument, "string too long");
    u8(static_cast<std::uint8_t>(s.size()));
    raw({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  }
  void str16(std::string_view s) {
    if (s.size() > 0xffff) throw Error(ErrorCode::kInvalidArgument, "string too long");
    u16(static_cast<std::uint16_t>(s.size()));
    raw({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  }
  void blob16(ByteView b) {
    if (b.size() > 0xffff) throw Error(ErrorCode::kInvalidArgument, "blob too long");
    u16(static_cast<std::uint16_t>(b.size()));
    raw(b);
  }

  std::size_t size() const { return buf_.size(); }
  Bytes& bytes() { return buf_; }
  Bytes take() { return std::move(buf_); }

 private:
  void put_be(std::uint64_t v, int width) {
    for (int i = width - 1; i >= 0; --i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes buf_;
};

class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get_be(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_be(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_be(4)); }
  std::uint64_t u64() { return get_be(8); }

  ByteView raw(std::size_t n) {
    need(n);
    ByteView out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::string str8() { return as_string(raw(u8())); }
  std::string str16() { return as_string(raw(u16())); }
  Bytes blob16() {
    ByteView b = raw(u16());
    return Bytes(b.begin(), b.end());
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0) throw DecodeError("trailing bytes after message");
  }

 private:
  static std::string as_string(ByteView b) { return std::string(b.begin(), b.end()); }
  void need(std::size_t n) const {
    if (remaining() < n) throw DecodeError("truncated input");
  }
  std::uint64_t get_be(std::size_t width) {
    need(width);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += width;
    return v;
  }

  ByteView data_;
  std::size_t pos_ = 0;
};

}  // namespace pbill
