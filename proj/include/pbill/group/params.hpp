#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>

#include "pbill/bytes.hpp"
#include "pbill/error.hpp"
#include "pbill/group/concepts.hpp"
#include "pbill/group/ristretto255.hpp"
#include "pbill/group/test_group.hpp"

namespace pbill {

static_assert(PrimeOrderGroup<TestGroup23>);
static_assert(PrimeOrderGroup<Ristretto255>);

inline constexpr std::string_view kDefaultDomainTag = "pbill:pedersen-h";

// Public commitment parameters: two independent generators of the group.
template <PrimeOrderGroup G>
struct GroupParams {
  using Group = G;
  std::string domain_tag;
  typename G::Element g;
  typename G::Element h;

  std::string_view group_id() const { return G::kId; }
  BigInt order() const { return G::order(); }
  bool operator==(const GroupParams&) const = default;
};

// h = hash_to_group(encode(g) || tag). Should that ever hit the identity or
// g itself, a counter byte is appended and hashing repeats.
template <PrimeOrderGroup G>
GroupParams<G> derive_params(std::string_view domain_tag = kDefaultDomainTag) {
  GroupParams<G> params;
  params.domain_tag = std::string(domain_tag);
  params.g = G::generator();

  ByteWriter input;
  input.raw(G::encode(params.g));
  input.raw({reinterpret_cast<const std::uint8_t*>(domain_tag.data()), domain_tag.size()});
  for (int counter = 0; counter < 256; ++counter) {
    Bytes attempt = input.bytes();
    if (counter > 0) attempt.push_back(static_cast<std::uint8_t>(counter));
    auto h = G::hash_to_group(attempt);
    if (h != G::identity() && h != params.g) {
      params.h = h;
      return params;
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "could not derive an independent generator");
}

struct GroupInfo {
  std::string_view id;
  std::size_t element_bytes;
  std::size_t scalar_bytes;
};

template <PrimeOrderGroup G>
constexpr GroupInfo group_info() {
  return {G::kId, G::kElementBytes, G::kScalarBytes};
}

inline std::optional<GroupInfo> find_group(std::string_view id) {
  if (id == TestGroup23::kId) return group_info<TestGroup23>();
  if (id == Ristretto255::kId) return group_info<Ristretto255>();
  return std::nullopt;
}

// Calls fn(std::type_identity<G>{}) for the backend named by id.
template <class Fn>
decltype(auto) with_group(std::string_view id, Fn&& fn) {
  if (id == TestGroup23::kId) return std::forward<Fn>(fn)(std::type_identity<TestGroup23>{});
  if (id == Ristretto255::kId) return std::forward<Fn>(fn)(std::type_identity<Ristretto255>{});
  throw Error(ErrorCode::kUnknownGroup, "unknown group id '" + std::string(id) + "'");
}

using AnyGroupParams = std::variant<GroupParams<TestGroup23>, GroupParams<Ristretto255>>;

inline AnyGroupParams derive_params(std::string_view group_id, std::string_view domain_tag) {
  return with_group(group_id, [&]<class G>(std::type_identity<G>) -> AnyGroupParams {
    return derive_params<G>(domain_tag);
  });
}

}  // namespace pbill
