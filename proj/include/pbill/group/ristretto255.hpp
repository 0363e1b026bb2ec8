#pragma once

#include <sodium.h>

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <string_view>

#include "pbill/bytes.hpp"
#include "pbill/error.hpp"
#include "pbill/random.hpp"

namespace pbill {

// Production group: ristretto255 over Curve25519 (prime order
// L = 2^252 + 27742317777372353535851937790883648493), backed by libsodium.
// Elements are kept in their canonical 32-byte encoding; the identity is
// the all-zero encoding. Scalars are stored little-endian internally and
// serialised big-endian.
class Ristretto255 {
 public:
  static constexpr std::string_view kId = "ristretto255";
  static constexpr std::size_t kElementBytes = crypto_core_ristretto255_BYTES;
  static constexpr std::size_t kScalarBytes = crypto_core_ristretto255_SCALARBYTES;

  struct Element {
    std::array<std::uint8_t, kElementBytes> bytes{};
    auto operator<=>(const Element&) const = default;
  };

  struct Scalar {
    std::array<std::uint8_t, kScalarBytes> le{};
    auto operator<=>(const Scalar&) const = default;
  };

  static BigInt order() {
    static const BigInt l =
        (BigInt(1) << 252) + BigInt("27742317777372353535851937790883648493");
    return l;
  }

  static Element identity() { return {}; }

  static Element generator() {
    static const Element g = [] {
      ensure_sodium();
      Element out;
      Scalar one = scalar(std::uint64_t{1});
      if (crypto_scalarmult_ristretto255_base(out.bytes.data(), one.le.data()) != 0) {
        throw Error(ErrorCode::kInvalidArgument, "ristretto255 base point derivation failed");
      }
      return out;
    }();
    return g;
  }

  static Element mul(const Element& a, const Element& b) {
    Element out;
    if (crypto_core_ristretto255_add(out.bytes.data(), a.bytes.data(), b.bytes.data()) != 0) {
      throw Error(ErrorCode::kInvalidArgument, "invalid ristretto255 element");
    }
    return out;
  }

  // libsodium reports an identity result as failure; inputs are valid by
  // construction, so that case is mapped back to the identity.
  static Element exp(const Element& base, const Scalar& k) {
    Element out;
    if (is_zero(k) || base == identity()) return out;
    int rc = base == generator()
                 ? crypto_scalarmult_ristretto255_base(out.bytes.data(), k.le.data())
                 : crypto_scalarmult_ristretto255(out.bytes.data(), k.le.data(), base.bytes.data());
    if (rc != 0) return identity();
    return out;
  }

  static Element inverse(const Element& a) {
    Element out;
    const Element zero = identity();
    if (crypto_core_ristretto255_sub(out.bytes.data(), zero.bytes.data(), a.bytes.data()) != 0) {
      throw Error(ErrorCode::kInvalidArgument, "invalid ristretto255 element");
    }
    return out;
  }

  static Bytes encode(const Element& e) { return Bytes(e.bytes.begin(), e.bytes.end()); }

  static Element decode(ByteView bytes) {
    ensure_sodium();
    if (bytes.size() != kElementBytes) throw DecodeError("ristretto255 element must be 32 bytes");
    Element e;
    std::copy(bytes.begin(), bytes.end(), e.bytes.begin());
    if (e != identity() && crypto_core_ristretto255_is_valid_point(e.bytes.data()) != 1) {
      throw DecodeError("invalid or non-canonical ristretto255 encoding");
    }
    return e;
  }

  static Element hash_to_group(ByteView data) {
    auto digest = sha512(data);
    Element out;
    crypto_core_ristretto255_from_hash(out.bytes.data(), digest.data());
    return out;
  }

  static Scalar scalar(std::uint64_t v) {
    Scalar s;
    for (int i = 0; i < 8; ++i) s.le[i] = static_cast<std::uint8_t>(v >> (8 * i));
    return s;
  }

  static Scalar scalar(const BigInt& v) {
    if (v < 0) throw Error(ErrorCode::kInvalidArgument, "negative scalar");
    BigInt reduced = v % order();
    Scalar s;
    for (std::size_t i = 0; i < kScalarBytes; ++i) {
      s.le[i] = static_cast<std::uint8_t>(static_cast<unsigned>(reduced & 0xff));
      reduced >>= 8;
    }
    return s;
  }

  static Scalar add(const Scalar& a, const Scalar& b) {
    Scalar out;
    crypto_core_ristretto255_scalar_add(out.le.data(), a.le.data(), b.le.data());
    return out;
  }
  static Scalar sub(const Scalar& a, const Scalar& b) {
    Scalar out;
    crypto_core_ristretto255_scalar_sub(out.le.data(), a.le.data(), b.le.data());
    return out;
  }
  static Scalar mul(const Scalar& a, const Scalar& b) {
    Scalar out;
    crypto_core_ristretto255_scalar_mul(out.le.data(), a.le.data(), b.le.data());
    return out;
  }
  static Scalar negate(const Scalar& a) {
    Scalar out;
    crypto_core_ristretto255_scalar_negate(out.le.data(), a.le.data());
    return out;
  }
  static Scalar invert(const Scalar& a) {
    Scalar out;
    if (crypto_core_ristretto255_scalar_invert(out.le.data(), a.le.data()) != 0) {
      throw Error(ErrorCode::kInvalidArgument, "zero has no inverse");
    }
    return out;
  }
  static bool is_zero(const Scalar& a) {
    return std::all_of(a.le.begin(), a.le.end(), [](std::uint8_t b) { return b == 0; });
  }

  // 512 uniform bits reduced mod L; the bias is below 2^-250.
  static Scalar random_scalar(RandomSource& rng) {
    std::array<std::uint8_t, crypto_core_ristretto255_NONREDUCEDSCALARBYTES> wide{};
    rng.fill(wide);
    Scalar out;
    crypto_core_ristretto255_scalar_reduce(out.le.data(), wide.data());
    return out;
  }

  static Bytes encode_scalar(const Scalar& s) { return Bytes(s.le.rbegin(), s.le.rend()); }

  static Scalar decode_scalar(ByteView bytes) {
    if (bytes.size() != kScalarBytes) throw DecodeError("ristretto255 scalar must be 32 bytes");
    std::array<std::uint8_t, crypto_core_ristretto255_NONREDUCEDSCALARBYTES> wide{};
    std::reverse_copy(bytes.begin(), bytes.end(), wide.begin());
    Scalar s;
    crypto_core_ristretto255_scalar_reduce(s.le.data(), wide.data());
    if (!std::equal(s.le.begin(), s.le.end(), wide.begin())) {
      throw DecodeError("ristretto255 scalar not reduced");
    }
    return s;
  }

  static BigInt to_bigint(const Scalar& s) {
    BigInt v = 0;
    for (auto it = s.le.rbegin(); it != s.le.rend(); ++it) v = (v << 8) | *it;
    return v;
  }
};

}  // namespace pbill
