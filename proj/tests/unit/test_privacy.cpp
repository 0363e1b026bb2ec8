#include <gtest/gtest.h>

#include "pbill/privacy.hpp"

namespace pbill {
namespace {

using T = TestGroup23;
using R = Ristretto255;

T::Scalar s(std::uint32_t v) { return T::scalar(std::uint64_t{v}); }

class FixedTariffs : public TariffSource {
 public:
  Tariff fetch(const std::string&, IntervalIndex i0, std::size_t n) override {
    ++calls;
    if (down) throw Error(ErrorCode::kNetwork, "back-end unreachable");
    if (wrong_range) return Tariff{i0 + 1, std::vector<std::uint32_t>(n, 1)};
    if (unknown) throw Error(ErrorCode::kUnknownTariff, "no tariff");
    return Tariff{i0, std::vector<std::uint32_t>(n, rate)};
  }
  std::uint32_t rate = 2;
  bool down = false;
  bool wrong_range = false;
  bool unknown = false;
  int calls = 0;
};

TEST(Price, WorkedExamples) {
  EXPECT_EQ(compute_price({0, {2, 0, 3}}, {0, {5, 7, 4}}), 22);
  EXPECT_EQ(compute_price({96, {3, 2}}, {96, {2, 3}}), 12);
  EXPECT_EQ(compute_price({0, {9, 9}}, {0, {0, 0}}), 0);
}

TEST(Price, IsExactWithoutWraparound) {
  ConsumptionProfile p{0, std::vector<std::uint32_t>(96, UINT32_MAX)};
  Tariff t{0, std::vector<std::uint32_t>(96, UINT32_MAX)};
  BigInt expected = BigInt(UINT32_MAX) * UINT32_MAX * 96;
  EXPECT_EQ(compute_price(p, t), expected);
  EXPECT_GT(expected, BigInt(1) << 64);
}

TEST(Price, MisalignmentIsRejected) {
  EXPECT_THROW(compute_price({0, {1, 2}}, {0, {1}}), Error);
  EXPECT_THROW(compute_price({0, {1, 2}}, {1, {1, 2}}), Error);
  try {
    compute_price({0, {1}}, {5, {1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMisaligned);
  }
}

TEST(RPrime, WorkedExampleAndLengthCheck) {
  std::vector<T::Scalar> r{s(5), s(1)};
  EXPECT_EQ(compute_r_prime<T>(r, {0, {2, 3}}).value, 2u);
  EXPECT_EQ(compute_r_prime<T>(r, {0, {0, 0}}).value, 0u);
  EXPECT_THROW(compute_r_prime<T>(r, {0, {2}}), Error);
}

TEST(Transform, GoldenBillingReport) {
  auto params = derive_params<T>();
  MeterKeypair keys("meter-7", Bytes(32, 1));
  std::vector<T::Scalar> r{s(5), s(1)};
  auto report = build_report<T>(params, keys, {96, {3, 2}}, std::span<const T::Scalar>(r));
  auto out = transform_report(params, report, {96, {2, 3}});
  EXPECT_TRUE(out.inconsistent_rows.empty());
  EXPECT_EQ(out.report.price, 12);
  EXPECT_EQ(out.report.r_prime.value, 2u);
  EXPECT_EQ(out.report.commitments, report.commitments());
  EXPECT_EQ(out.report.signature, report.signature);
  EXPECT_EQ(out.report.meter_id, "meter-7");
  EXPECT_EQ(out.report.i0, 96u);
  // Opening check by hand: COMM_T = 6^2 * 6^3 = 2 = g^12 h^2 mod 23.
  auto folded = weighted_fold<T>(out.report.commitments, std::vector<T::Scalar>{s(2), s(3)});
  EXPECT_EQ(folded.c.value, 2u);
  EXPECT_TRUE(open(params, folded, T::scalar(out.report.price), out.report.r_prime));
}

// The homomorphic identity behind the bill, on random inputs.
TEST(Transform, OpeningIdentityHoldsForRandomSessions) {
  auto params = derive_params<R>();
  SeededRandom rng(30, "transform");
  auto keys = MeterKeypair::generate("m", rng);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng.uniform(96);
    const IntervalIndex i0 = rng.next_u64() >> 8;
    ConsumptionProfile p{i0, {}};
    Tariff t{i0, {}};
    for (std::size_t k = 0; k < n; ++k) {
      p.values.push_back(static_cast<std::uint32_t>(rng.next_u64()));
      t.rates.push_back(static_cast<std::uint32_t>(rng.uniform(1000)));
    }
    auto report = build_report<R>(params, keys, p, rng);
    auto out = transform_report(params, report, t).report;
    std::vector<R::Scalar> w;
    for (auto rate : t.rates) w.push_back(R::scalar(std::uint64_t{rate}));
    EXPECT_TRUE(open(params, weighted_fold<R>(out.commitments, w), R::scalar(out.price), out.r_prime));
  }
}

TEST(Transform, FlagsRowsThatDoNotOpen) {
  auto params = derive_params<T>();
  MeterKeypair keys("m", Bytes(32, 2));
  std::vector<T::Scalar> r{s(5), s(1), s(7)};
  auto report = build_report<T>(params, keys, {10, {3, 2, 1}}, std::span<const T::Scalar>(r));
  report.rows[1].value = 4;
  auto out = transform_report(params, report, {10, {1, 1, 1}});
  EXPECT_EQ(out.inconsistent_rows, std::vector<IntervalIndex>{11});
  EXPECT_TRUE(transform_report(params, report, {10, {1, 1, 1}}, false).inconsistent_rows.empty());
  EXPECT_THROW(transform_report(params, report, {10, {1, 1}}), Error);
}

TEST(Transform, ZeroTariffGivesZeroBill) {
  auto params = derive_params<R>();
  SeededRandom rng(31);
  auto keys = MeterKeypair::generate("m", rng);
  auto report = build_report<R>(params, keys, {0, {5, 6, 7}}, rng);
  auto out = transform_report(params, report, {0, {0, 0, 0}}).report;
  EXPECT_EQ(out.price, 0);
  EXPECT_TRUE(R::is_zero(out.r_prime));
}

TEST(FetchTariff, RangeIsChecked) {
  FixedTariffs src;
  EXPECT_EQ(fetch_tariff(src, "m", 4, 3), (Tariff{4, {2, 2, 2}}));
  src.wrong_range = true;
  try {
    fetch_tariff(src, "m", 4, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProtocol);
  }
}

struct ComponentFixture : ::testing::Test {
  GroupParams<T> params = derive_params<T>();
  MeterKeypair keys{"m", Bytes(32, 3)};
  SeededRandom rng{32};
  FixedTariffs tariffs;

  CommitmentReport<T> make(IntervalIndex i0) {
    return build_report<T>(params, keys, {i0, {1, 2}}, rng);
  }
};

TEST_F(ComponentFixture, ForwardsInArrivalOrder) {
  PrivacyComponent<T> pc(params, tariffs);
  for (IntervalIndex i0 : {30u, 10u, 20u}) pc.enqueue(make(i0));
  std::vector<IntervalIndex> order;
  while (pc.process_next([&](const TransformResult<T>& r) { order.push_back(r.report.i0); })) {
  }
  EXPECT_EQ(order, (std::vector<IntervalIndex>{30, 10, 20}));
  EXPECT_EQ(pc.pending(), 0u);
  EXPECT_TRUE(pc.failed().empty());
}

TEST_F(ComponentFixture, RetriableFailuresKeepTheHead) {
  PrivacyComponent<T> pc(params, tariffs);
  pc.enqueue(make(1));
  pc.enqueue(make(2));
  tariffs.down = true;
  EXPECT_FALSE(pc.process_next([](const auto&) {}));
  EXPECT_EQ(pc.pending(), 2u);
  tariffs.down = false;

  int attempts = 0;
  auto flaky = [&](const TransformResult<T>&) {
    if (++attempts == 1) throw Error(ErrorCode::kNetwork, "send failed");
  };
  EXPECT_FALSE(pc.process_next(flaky));
  EXPECT_EQ(pc.pending(), 2u);
  EXPECT_TRUE(pc.process_next(flaky));
  EXPECT_EQ(pc.pending(), 1u);
}

TEST_F(ComponentFixture, NonRetriableFailuresAreSetAside) {
  PrivacyComponent<T> pc(params, tariffs);
  pc.enqueue(make(1));
  pc.enqueue(make(2));
  tariffs.unknown = true;
  EXPECT_TRUE(pc.process_next([](const auto&) {}));
  tariffs.unknown = false;
  ASSERT_EQ(pc.failed().size(), 1u);
  EXPECT_EQ(pc.failed()[0].report.i0, 1u);
  IntervalIndex forwarded = 0;
  EXPECT_TRUE(pc.process_next([&](const TransformResult<T>& r) { forwarded = r.report.i0; }));
  EXPECT_EQ(forwarded, 2u);
}

// The billing report type has no slot for values or per-interval randomness.
template <class B>
concept HasValues = requires(B b) { b.values; };
template <class B>
concept HasRows = requires(B b) { b.rows; };
template <class B>
concept HasRandomness = requires(B b) { b.randomness; };
static_assert(!HasValues<BillingReport<T>> && !HasRows<BillingReport<T>> &&
              !HasRandomness<BillingReport<T>>);
static_assert(HasRows<CommitmentReport<T>>);

}  // namespace
}  // namespace pbill
