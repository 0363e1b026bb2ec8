#pragma once

#include <span>
#include <stdexcept>

#include "pbill/group/params.hpp"

namespace pbill {

template <PrimeOrderGroup G>
struct Commitment {
  typename G::Element c;
  bool operator==(const Commitment&) const = default;
};

template <PrimeOrderGroup G>
struct Opening {
  typename G::Scalar x;
  typename G::Scalar r;
  bool operator==(const Opening&) const = default;
};

// c = g^x h^r
template <PrimeOrderGroup G>
Commitment<G> commit(const GroupParams<G>& params, const typename G::Scalar& x,
                     const typename G::Scalar& r) {
  return {G::mul(G::exp(params.g, x), G::exp(params.h, r))};
}

template <PrimeOrderGroup G>
Commitment<G> commit(const GroupParams<G>& params, const Opening<G>& opening) {
  return commit(params, opening.x, opening.r);
}

template <PrimeOrderGroup G>
bool open(const GroupParams<G>& params, const Commitment<G>& c, const typename G::Scalar& x,
          const typename G::Scalar& r) {
  return commit(params, x, r) == c;
}

// Opens under (x_a + x_b, r_a + r_b).
template <PrimeOrderGroup G>
Commitment<G> hom_combine(const Commitment<G>& a, const Commitment<G>& b) {
  return {G::mul(a.c, b.c)};
}

// Opens under (x t, r t).
template <PrimeOrderGroup G>
Commitment<G> hom_scale(const Commitment<G>& a, const typename G::Scalar& t) {
  return {G::exp(a.c, t)};
}

// prod_k commitments[k]^{weights[k]}; opens under (sum t_k x_k, sum t_k r_k).
template <PrimeOrderGroup G>
Commitment<G> weighted_fold(std::span<const Commitment<G>> commitments,
                            std::span<const typename G::Scalar> weights) {
  if (commitments.size() != weights.size()) {
    throw Error(ErrorCode::kMisaligned, "commitment and weight vectors differ in length");
  }
  Commitment<G> acc{G::identity()};
  for (std::size_t k = 0; k < commitments.size(); ++k) {
    acc = hom_combine(acc, hom_scale(commitments[k], weights[k]));
  }
  return acc;
}

}  // namespace pbill
