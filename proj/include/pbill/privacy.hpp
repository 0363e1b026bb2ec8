#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pbill/metering.hpp"

namespace pbill {

// Time-of-use tariff: price units per consumption unit, aligned 1:1 with
// the intervals [i0, i0 + n).
struct Tariff {
  IntervalIndex i0 = 0;
  std::vector<std::uint32_t> rates;

  std::size_t size() const { return rates.size(); }
  bool operator==(const Tariff&) const = default;
};

// What the privacy component forwards to the back-end. There are no slots
// for consumption values or per-interval randomness.
template <PrimeOrderGroup G>
struct BillingReport {
  std::string meter_id;
  IntervalIndex i0 = 0;
  BigInt price = 0;
  typename G::Scalar r_prime;
  std::vector<Commitment<G>> commitments;
  Bytes signature;
  bool operator==(const BillingReport&) const = default;
};

// Exact sum of t_k * v_k, never reduced.
inline BigInt compute_price(const ConsumptionProfile& profile, const Tariff& tariff) {
  if (tariff.i0 != profile.i0) {
    throw Error(ErrorCode::kMisaligned, "tariff starts at interval " + std::to_string(tariff.i0) +
                                            ", profile at " + std::to_string(profile.i0));
  }
  if (tariff.size() != profile.size()) {
    throw Error(ErrorCode::kMisaligned, "tariff covers " + std::to_string(tariff.size()) +
                                            " intervals, profile " +
                                            std::to_string(profile.size()));
  }
  BigInt price = 0;
  for (std::size_t k = 0; k < profile.size(); ++k) {
    price += BigInt(tariff.rates[k]) * profile.values[k];
  }
  return price;
}

// r' = sum t_k * r_k mod q
template <PrimeOrderGroup G>
typename G::Scalar compute_r_prime(std::span<const typename G::Scalar> randomness,
                                   const Tariff& tariff) {
  if (randomness.size() != tariff.size()) {
    throw Error(ErrorCode::kMisaligned, "randomness and tariff differ in length");
  }
  typename G::Scalar acc = G::scalar(std::uint64_t{0});
  for (std::size_t k = 0; k < randomness.size(); ++k) {
    acc = G::add(acc, G::mul(randomness[k], G::scalar(std::uint64_t{tariff.rates[k]})));
  }
  return acc;
}

template <PrimeOrderGroup G>
struct TransformResult {
  BillingReport<G> report;
  // Rows whose commitment did not open under (v, r). The report is still
  // forwarded; the back-end will reject it.
  std::vector<IntervalIndex> inconsistent_rows;
};

// Computes the bill and r', strips the v and r columns. Commitments and
// signature pass through unchanged.
template <PrimeOrderGroup G>
TransformResult<G> transform_report(const GroupParams<G>& params,
                                    const CommitmentReport<G>& report, const Tariff& tariff,
                                    bool check_rows = true) {
  ConsumptionProfile profile{report.i0, {}};
  std::vector<typename G::Scalar> randomness;
  profile.values.reserve(report.rows.size());
  randomness.reserve(report.rows.size());
  for (const auto& row : report.rows) {
    profile.values.push_back(row.value);
    randomness.push_back(row.r);
  }

  TransformResult<G> out;
  out.report.meter_id = report.meter_id;
  out.report.i0 = report.i0;
  out.report.price = compute_price(profile, tariff);
  out.report.r_prime = compute_r_prime<G>(randomness, tariff);
  out.report.commitments = report.commitments();
  out.report.signature = report.signature;

  if (check_rows) {
    for (const auto& row : report.rows) {
      if (!open(params, row.commitment, G::scalar(std::uint64_t{row.value}), row.r)) {
        out.inconsistent_rows.push_back(row.interval);
      }
    }
  }
  return out;
}

// Where the privacy component obtains tariffs from: the back-end link, or
// an alternative endpoint speaking the same schema.
class TariffSource {
 public:
  virtual ~TariffSource() = default;
  // Throws Error(kNetwork) when the source is unreachable (retriable) and
  // Error(kProtocol / kUnknownTariff) when the answer is unusable.
  virtual Tariff fetch(const std::string& meter_id, IntervalIndex i0, std::size_t n) = 0;
};

// Range check applied to every fetched tariff.
inline Tariff checked_tariff(Tariff tariff, IntervalIndex i0, std::size_t n) {
  if (tariff.i0 != i0 || tariff.size() != n) {
    throw Error(ErrorCode::kProtocol, "tariff does not cover the requested range [" +
                                          std::to_string(i0) + ", " + std::to_string(i0 + n) +
                                          ")");
  }
  return tariff;
}

inline Tariff fetch_tariff(TariffSource& source, const std::string& meter_id, IntervalIndex i0,
                           std::size_t n) {
  return checked_tariff(source.fetch(meter_id, i0, n), i0, n);
}

// The plug-in component's processing queue. Reports are handled strictly in
// arrival order. A report leaves the queue only once it has been forwarded,
// or when it fails for a non-retriable reason, in which case it is moved to
// failed() together with the error text.
template <PrimeOrderGroup G>
class PrivacyComponent {
 public:
  struct Failure {
    CommitmentReport<G> report;
    std::string reason;
  };

  PrivacyComponent(GroupParams<G> params, TariffSource& tariffs, bool check_rows = true)
      : params_(std::move(params)), tariffs_(tariffs), check_rows_(check_rows) {}

  void enqueue(CommitmentReport<G> report) { queue_.push_back(std::move(report)); }
  std::size_t pending() const { return queue_.size(); }
  const std::vector<Failure>& failed() const { return failed_; }

  // forward(const TransformResult<G>&) delivers the billing report; it may
  // throw a retriable Error, in which case the report stays at the head.
  // Returns true when the head was consumed.
  template <class Forward>
  bool process_next(Forward&& forward) {
    if (queue_.empty()) return false;
    const CommitmentReport<G>& head = queue_.front();
    try {
      Tariff tariff = fetch_tariff(tariffs_, head.meter_id, head.i0, head.rows.size());
      TransformResult<G> result = transform_report(params_, head, tariff, check_rows_);
      forward(result);
    } catch (const Error& e) {
      if (e.retriable()) return false;
      failed_.push_back({std::move(queue_.front()), e.what()});
      queue_.pop_front();
      return true;
    }
    queue_.pop_front();
    return true;
  }

 private:
  GroupParams<G> params_;
  TariffSource& tariffs_;
  bool check_rows_;
  std::deque<CommitmentReport<G>> queue_;
  std::vector<Failure> failed_;
};

}  // namespace pbill
