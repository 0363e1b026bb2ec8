#include <gtest/gtest.h>

#include <map>
#include <set>

#include "pbill/pedersen.hpp"
#include "pbill/random.hpp"

namespace pbill {
namespace {

using T = TestGroup23;
using R = Ristretto255;

std::uint32_t powmod(std::uint32_t b, std::uint32_t e, std::uint32_t m) {
  std::uint32_t acc = 1;
  for (std::uint32_t i = 0; i < e; ++i) acc = acc * b % m;
  return acc;
}

// g^x h^r mod 23 computed from scratch.
std::uint32_t oracle_commit(std::uint32_t x, std::uint32_t r) {
  return powmod(4, x % 11, 23) * powmod(9, r % 11, 23) % 23;
}

T::Scalar s(std::uint32_t v) { return T::scalar(std::uint64_t{v}); }

TEST(Pedersen, GoldenCommitments) {
  auto p = derive_params<T>();
  EXPECT_EQ(commit(p, s(3), s(5)).c.value, 6u);
  EXPECT_EQ(commit(p, s(2), s(1)).c.value, 6u);
  EXPECT_EQ(commit(p, s(1), s(2)).c.value, 2u);
  EXPECT_EQ(commit(p, s(2), s(2)).c.value, 8u);
  EXPECT_TRUE(open(p, Commitment<T>{{6}}, s(3), s(5)));
  EXPECT_FALSE(open(p, Commitment<T>{{6}}, s(4), s(5)));
}

TEST(Pedersen, CommitMatchesOracleExhaustively) {
  auto p = derive_params<T>();
  for (std::uint32_t x = 0; x < 11; ++x) {
    for (std::uint32_t r = 0; r < 11; ++r) {
      EXPECT_EQ(commit(p, s(x), s(r)).c.value, oracle_commit(x, r));
      EXPECT_EQ(commit(p, Opening<T>{s(x), s(r)}), commit(p, s(x), s(r)));
    }
  }
}

// Perfect hiding: for each x, r -> commit(x, r) hits every element once,
// so the commitment distribution does not depend on x.
TEST(Pedersen, HidingExhaustive) {
  auto p = derive_params<T>();
  for (std::uint32_t x = 0; x < 11; ++x) {
    std::set<std::uint32_t> image;
    for (std::uint32_t r = 0; r < 11; ++r) image.insert(commit(p, s(x), s(r)).c.value);
    EXPECT_EQ(image.size(), 11u) << "x=" << x;
  }
}

// Binding under a fixed blinding value, and the structure of collisions:
// commit(x, r) = commit(x', r') exactly when x + a r = x' + a r' (mod 11)
// with a = log_g h. Finding one therefore reveals a.
TEST(Pedersen, BindingStructureExhaustive) {
  auto p = derive_params<T>();
  std::uint32_t a = 0;
  while (T::exp(p.g, s(a)) != p.h) ++a;
  ASSERT_EQ(powmod(4, a, 23), 9u);
  for (std::uint32_t r = 0; r < 11; ++r) {
    std::set<std::uint32_t> image;
    for (std::uint32_t x = 0; x < 11; ++x) image.insert(commit(p, s(x), s(r)).c.value);
    EXPECT_EQ(image.size(), 11u);
  }
  for (std::uint32_t x = 0; x < 11; ++x) {
    for (std::uint32_t r = 0; r < 11; ++r) {
      for (std::uint32_t x2 = 0; x2 < 11; ++x2) {
        for (std::uint32_t r2 = 0; r2 < 11; ++r2) {
          bool same = commit(p, s(x), s(r)) == commit(p, s(x2), s(r2));
          EXPECT_EQ(same, (x + a * r) % 11 == (x2 + a * r2) % 11);
        }
      }
    }
  }
}

TEST(Pedersen, HomomorphismExhaustiveInTestGroup) {
  auto p = derive_params<T>();
  for (std::uint32_t x1 = 0; x1 < 11; ++x1) {
    for (std::uint32_t r1 = 0; r1 < 11; ++r1) {
      const auto c1 = commit(p, s(x1), s(r1));
      for (std::uint32_t t = 0; t < 11; ++t) {
        EXPECT_EQ(hom_scale(c1, s(t)), commit(p, s(x1 * t), s(r1 * t)));
      }
      for (std::uint32_t x2 = 0; x2 < 11; ++x2) {
        for (std::uint32_t r2 = 0; r2 < 11; ++r2) {
          EXPECT_EQ(hom_combine(c1, commit(p, s(x2), s(r2))), commit(p, s(x1 + x2), s(r1 + r2)));
        }
      }
    }
  }
}

TEST(Pedersen, WeightedFoldAgainstOracle) {
  auto p = derive_params<T>();
  SeededRandom rng(9, "fold");
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.uniform(8);
    std::vector<Commitment<T>> comm;
    std::vector<T::Scalar> w;
    std::uint32_t oracle = 1;
    for (std::size_t k = 0; k < n; ++k) {
      auto x = static_cast<std::uint32_t>(rng.uniform(11));
      auto r = static_cast<std::uint32_t>(rng.uniform(11));
      auto t = static_cast<std::uint32_t>(rng.uniform(50));
      comm.push_back({{oracle_commit(x, r)}});
      w.push_back(s(t));
      oracle = oracle * powmod(oracle_commit(x, r), t, 23) % 23;
    }
    EXPECT_EQ(weighted_fold<T>(comm, w).c.value, oracle);
  }
  std::vector<Commitment<T>> two(2);
  std::vector<T::Scalar> one(1);
  EXPECT_THROW(weighted_fold<T>(two, one), Error);
  EXPECT_EQ(weighted_fold<T>({}, {}).c, T::identity());
}

TEST(Pedersen, ProductionGroupIdentities) {
  auto p = derive_params<R>();
  SeededRandom rng(10, "ristretto-pedersen");
  for (int i = 0; i < 20; ++i) {
    auto x1 = R::random_scalar(rng), r1 = R::random_scalar(rng);
    auto x2 = R::random_scalar(rng), r2 = R::random_scalar(rng);
    auto t = R::random_scalar(rng);
    auto c1 = commit(p, x1, r1);
    auto c2 = commit(p, x2, r2);
    EXPECT_TRUE(open(p, c1, x1, r1));
    EXPECT_FALSE(open(p, c1, R::add(x1, R::scalar(std::uint64_t{1})), r1));
    EXPECT_FALSE(open(p, c1, x1, R::add(r1, R::scalar(std::uint64_t{1}))));
    EXPECT_EQ(hom_combine(c1, c2), commit(p, R::add(x1, x2), R::add(r1, r2)));
    EXPECT_EQ(hom_scale(c1, t), commit(p, R::mul(x1, t), R::mul(r1, t)));
  }
}

}  // namespace
}  // namespace pbill
