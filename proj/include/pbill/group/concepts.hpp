#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <string_view>

#include "pbill/bytes.hpp"
#include "pbill/random.hpp"

namespace pbill {

// A cyclic group of prime order q written multiplicatively, together with
// arithmetic in its scalar field Z_q. Backends are stateless classes with
// static members; elements and scalars are small value types that always
// hold a valid, reduced representative.
template <class G>
concept PrimeOrderGroup =
    std::regular<typename G::Element> && std::regular<typename G::Scalar> &&
    requires(const typename G::Element& e, const typename G::Scalar& s, ByteView bytes,
             RandomSource& rng, const BigInt& big, std::uint64_t small) {
      { G::kId } -> std::convertible_to<std::string_view>;
      { G::kElementBytes } -> std::convertible_to<std::size_t>;
      { G::kScalarBytes } -> std::convertible_to<std::size_t>;
      { G::order() } -> std::same_as<BigInt>;

      { G::identity() } -> std::same_as<typename G::Element>;
      { G::generator() } -> std::same_as<typename G::Element>;
      { G::mul(e, e) } -> std::same_as<typename G::Element>;
      { G::exp(e, s) } -> std::same_as<typename G::Element>;
      { G::inverse(e) } -> std::same_as<typename G::Element>;
      { G::encode(e) } -> std::same_as<Bytes>;
      { G::decode(bytes) } -> std::same_as<typename G::Element>;
      { G::hash_to_group(bytes) } -> std::same_as<typename G::Element>;

      { G::scalar(small) } -> std::same_as<typename G::Scalar>;
      { G::scalar(big) } -> std::same_as<typename G::Scalar>;
      { G::add(s, s) } -> std::same_as<typename G::Scalar>;
      { G::sub(s, s) } -> std::same_as<typename G::Scalar>;
      { G::mul(s, s) } -> std::same_as<typename G::Scalar>;
      { G::negate(s) } -> std::same_as<typename G::Scalar>;
      { G::invert(s) } -> std::same_as<typename G::Scalar>;
      { G::is_zero(s) } -> std::same_as<bool>;
      { G::random_scalar(rng) } -> std::same_as<typename G::Scalar>;
      { G::encode_scalar(s) } -> std::same_as<Bytes>;
      { G::decode_scalar(bytes) } -> std::same_as<typename G::Scalar>;
      { G::to_bigint(s) } -> std::same_as<BigInt>;
    };

}  // namespace pbill
