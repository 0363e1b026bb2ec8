#pragma once

#include <sodium.h>

#include <array>
#include <string>

#include "pbill/bytes.hpp"
#include "pbill/random.hpp"

namespace pbill {

// Ed25519 verification key of a meter.
struct PublicKey {
  std::array<std::uint8_t, crypto_sign_PUBLICKEYBYTES> bytes{};
  bool operator==(const PublicKey&) const = default;

  static PublicKey from_bytes(ByteView b) {
    if (b.size() != crypto_sign_PUBLICKEYBYTES) throw DecodeError("public key must be 32 bytes");
    PublicKey pk;
    std::copy(b.begin(), b.end(), pk.bytes.begin());
    return pk;
  }
};

// Meter signing identity. The secret half is wiped on destruction.
class MeterKeypair {
 public:
  MeterKeypair(std::string meter_id, ByteView seed) : meter_id_(std::move(meter_id)) {
    ensure_sodium();
    if (seed.size() != crypto_sign_SEEDBYTES) {
      throw Error(ErrorCode::kInvalidArgument, "signing seed must be 32 bytes");
    }
    crypto_sign_seed_keypair(public_key_.bytes.data(), secret_.data(), seed.data());
  }

  MeterKeypair(const MeterKeypair&) = default;
  MeterKeypair& operator=(const MeterKeypair&) = default;
  ~MeterKeypair() { sodium_memzero(secret_.data(), secret_.size()); }

  static MeterKeypair generate(std::string meter_id, RandomSource& rng) {
    std::array<std::uint8_t, crypto_sign_SEEDBYTES> seed{};
    rng.fill(seed);
    MeterKeypair kp(std::move(meter_id), seed);
    sodium_memzero(seed.data(), seed.size());
    return kp;
  }

  const std::string& meter_id() const { return meter_id_; }
  const PublicKey& public_key() const { return public_key_; }

  // The 32-byte seed the keypair was derived from (first half of the
  // libsodium secret key).
  Bytes seed() const { return Bytes(secret_.begin(), secret_.begin() + crypto_sign_SEEDBYTES); }

  Bytes sign(ByteView message) const {
    Bytes sig(crypto_sign_BYTES);
    crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), secret_.data());
    return sig;
  }

 private:
  std::string meter_id_;
  PublicKey public_key_;
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> secret_{};
};

// Malformed signatures are a plain reject.
inline bool verify_signature(const PublicKey& pk, ByteView message, ByteView sig) {
  ensure_sodium();
  if (sig.size() != crypto_sign_BYTES) return false;
  return crypto_sign_verify_detached(sig.data(), message.data(), message.size(),
                                     pk.bytes.data()) == 0;
}

}  // namespace pbill
