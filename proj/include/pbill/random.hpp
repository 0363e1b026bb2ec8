#pragma once

#include <sodium.h>

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

#include "pbill/bytes.hpp"

namespace pbill {

// Source of randomness held by exactly one party. Not thread-safe.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;

  std::uint64_t next_u64() {
    std::array<std::uint8_t, 8> b{};
    fill(b);
    std::uint64_t v = 0;
    for (std::uint8_t x : b) v = (v << 8) | x;
    return v;
  }

  // Uniform in [0, bound) by rejection; bound must be non-zero.
  std::uint64_t uniform(std::uint64_t bound) {
    if (bound == 0) throw Error(ErrorCode::kInvalidArgument, "uniform bound is zero");
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    for (;;) {
      std::uint64_t v = next_u64();
      if (v < limit) return v % bound;
    }
  }

  // Uniform double in [0, 1) with 53 bits of precision.
  double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
};

// Operating-system CSPRNG; the only source allowed outside test mode.
class SystemRandom final : public RandomSource {
 public:
  SystemRandom() { ensure_sodium(); }
  void fill(std::span<std::uint8_t> out) override { randombytes_buf(out.data(), out.size()); }
};

// Deterministic ChaCha20 keystream keyed by SHA-256(label || seed).
class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(std::uint64_t seed, std::string_view label = "pbill") {
    ensure_sodium();
    ByteWriter w;
    w.str8(label);
    w.u64(seed);
    key_ = sha256(w.bytes());
  }

  void fill(std::span<std::uint8_t> out) override {
    for (std::uint8_t& b : out) {
      if (offset_ == block_.size()) refill();
      b = block_[offset_++];
    }
  }

  // Independent child stream, e.g. one per simulated meter.
  SeededRandom fork(std::string_view label, std::uint64_t index) const {
    ByteWriter w;
    w.raw(key_);
    w.str8(label);
    w.u64(index);
    auto digest = sha256(w.bytes());
    std::uint64_t seed = 0;
    for (int i = 0; i < 8; ++i) seed = (seed << 8) | digest[i];
    return SeededRandom(seed, label);
  }

 private:
  void refill() {
    static constexpr std::array<std::uint8_t, crypto_stream_chacha20_NONCEBYTES> kNonce{};
    block_.fill(0);
    crypto_stream_chacha20_xor_ic(block_.data(), block_.data(), block_.size(), kNonce.data(),
                                  counter_++, key_.data());
    offset_ = 0;
  }

  std::array<std::uint8_t, 32> key_{};
  std::array<std::uint8_t, 64> block_{};
  std::size_t offset_ = 64;
  std::uint64_t counter_ = 0;
};

}  // namespace pbill
