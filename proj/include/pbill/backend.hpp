#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include "pbill/ledger.hpp"
#include "pbill/privacy.hpp"

namespace pbill {

// Bills must stay below 2^64. With q > 2^192 the opening check on
// price mod q then pins the integer price exactly: n <= 2^16 intervals with
// v, t < 2^32 cannot reach q, and price + q is always out of range.
inline const BigInt kPriceBound = BigInt(1) << 64;

enum class RejectReason {
  kNone,
  kBadSignature,
  kMisaligned,
  kPriceOutOfRange,
  kOpeningFailed,
  kRowOpeningFailed,
  kUnknownMeter,
  kUnknownTariff,
  kGroupMismatch,
  kMalformed,
};

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kNone: return "none";
    case RejectReason::kBadSignature: return "bad_signature";
    case RejectReason::kMisaligned: return "misaligned";
    case RejectReason::kPriceOutOfRange: return "price_out_of_range";
    case RejectReason::kOpeningFailed: return "opening_failed";
    case RejectReason::kRowOpeningFailed: return "row_opening_failed";
    case RejectReason::kUnknownMeter: return "unknown_meter";
    case RejectReason::kUnknownTariff: return "unknown_tariff";
    case RejectReason::kGroupMismatch: return "group_mismatch";
    case RejectReason::kMalformed: return "malformed";
  }
  return "unknown";
}

inline std::optional<RejectReason> reject_reason_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(RejectReason::kMalformed); ++i) {
    auto r = static_cast<RejectReason>(i);
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

struct Verdict {
  bool accepted = false;
  RejectReason reason = RejectReason::kNone;
  std::string detail;

  static Verdict accept() { return {true, RejectReason::kNone, {}}; }
  static Verdict reject(RejectReason reason, std::string detail) {
    return {false, reason, std::move(detail)};
  }
};

// COMM_Tariff = prod_k Comm_k^{t_k}
template <PrimeOrderGroup G>
Commitment<G> tariff_commitment(std::span<const Commitment<G>> commitments, const Tariff& tariff) {
  std::vector<typename G::Scalar> weights;
  weights.reserve(tariff.size());
  for (std::uint32_t t : tariff.rates) weights.push_back(G::scalar(std::uint64_t{t}));
  return weighted_fold<G>(commitments, weights);
}

// The opening step on its own: COMM_Tariff opens to (price mod q, r').
template <PrimeOrderGroup G>
bool aggregate_opens(const GroupParams<G>& params, std::span<const Commitment<G>> commitments,
                     const Tariff& tariff, const BigInt& price, const typename G::Scalar& r_prime) {
  if (commitments.size() != tariff.size()) return false;
  return open(params, tariff_commitment<G>(commitments, tariff), G::scalar(price), r_prime);
}

// Checks, in order: signature over (i0, COMM); alignment of COMM with the
// tariff; the bill is in [0, 2^64); the aggregate commitment opens. The
// first failing check names the reject reason.
template <PrimeOrderGroup G>
Verdict verify_billing(const GroupParams<G>& params, const PublicKey& pk, const Tariff& tariff,
                       const BillingReport<G>& report) {
  if (!verify_report_signature<G>(pk, report.i0, report.commitments, report.signature)) {
    return Verdict::reject(RejectReason::kBadSignature, "signature over (i0, COMM) is invalid");
  }
  if (report.commitments.empty() || tariff.i0 != report.i0 ||
      tariff.size() != report.commitments.size()) {
    return Verdict::reject(RejectReason::kMisaligned,
                           "tariff [" + std::to_string(tariff.i0) + ", +" +
                               std::to_string(tariff.size()) + ") vs report [" +
                               std::to_string(report.i0) + ", +" +
                               std::to_string(report.commitments.size()) + ")");
  }
  if (report.price < 0 || report.price >= kPriceBound) {
    return Verdict::reject(RejectReason::kPriceOutOfRange, "price must be below 2^64");
  }
  if (!aggregate_opens(params, std::span<const Commitment<G>>(report.commitments), tariff,
                       report.price, report.r_prime)) {
    return Verdict::reject(RejectReason::kOpeningFailed,
                           "aggregated commitment does not open to (price, r')");
  }
  return Verdict::accept();
}

// Verification of an unstripped meter table (no privacy component on the
// link). The back-end sees the plaintext and prices it itself.
template <PrimeOrderGroup G>
Verdict verify_meter_report(const GroupParams<G>& params, const PublicKey& pk,
                            const Tariff& tariff, const CommitmentReport<G>& report) {
  auto comm = report.commitments();
  if (!verify_report_signature<G>(pk, report.i0, comm, report.signature)) {
    return Verdict::reject(RejectReason::kBadSignature, "signature over (i0, COMM) is invalid");
  }
  if (report.rows.empty() || tariff.i0 != report.i0 || tariff.size() != report.rows.size()) {
    return Verdict::reject(RejectReason::kMisaligned, "tariff does not match report range");
  }
  for (const auto& row : report.rows) {
    if (!open(params, row.commitment, G::scalar(std::uint64_t{row.value}), row.r)) {
      return Verdict::reject(RejectReason::kRowOpeningFailed,
                             "row " + std::to_string(row.interval) + " does not open");
    }
  }
  return Verdict::accept();
}

// ---------------------------------------------------------------------------
// Tariffs

// Published tariffs keyed by (meter, i0, n). Once a tariff has been served
// it can no longer be replaced by different rates.
class TariffStore {
 public:
  void publish(const std::string& meter_id, const Tariff& tariff) {
    if (tariff.rates.empty()) throw Error(ErrorCode::kInvalidArgument, "empty tariff");
    std::lock_guard lock(mu_);
    auto key = Key{meter_id, tariff.i0, tariff.size()};
    auto it = entries_.find(key);
    if (it != entries_.end() && it->second.served) {
      if (it->second.tariff == tariff) return;
      throw Error(ErrorCode::kTariffImmutable,
                  "tariff for " + meter_id + " at " + std::to_string(tariff.i0) +
                      " was already served");
    }
    entries_[key] = Entry{tariff, false};
  }

  Tariff serve(const std::string& meter_id, IntervalIndex i0, std::size_t n) {
    std::lock_guard lock(mu_);
    auto it = entries_.find(Key{meter_id, i0, n});
    if (it == entries_.end()) {
      throw Error(ErrorCode::kUnknownTariff, "no tariff published for " + meter_id + " [" +
                                                 std::to_string(i0) + ", +" + std::to_string(n) +
                                                 ")");
    }
    it->second.served = true;
    return it->second.tariff;
  }

  std::optional<Tariff> lookup(const std::string& meter_id, IntervalIndex i0,
                               std::size_t n) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(Key{meter_id, i0, n});
    if (it == entries_.end()) return std::nullopt;
    return it->second.tariff;
  }

  bool contains(const std::string& meter_id, IntervalIndex i0, std::size_t n) const {
    return lookup(meter_id, i0, n).has_value();
  }

 private:
  using Key = std::tuple<std::string, IntervalIndex, std::size_t>;
  struct Entry {
    Tariff tariff;
    bool served = false;
  };
  mutable std::mutex mu_;
  std::map<Key, Entry> entries_;
};

// Repeating daily time-of-use schedule used to publish tariffs on demand.
struct TariffSchedule {
  std::vector<std::uint32_t> daily_rates;

  // Night / morning / day / evening peak / late evening bands over 96 slots.
  static TariffSchedule time_of_use(std::uint32_t intervals_per_day = kIntervalsPerDay) {
    TariffSchedule s;
    s.daily_rates.resize(intervals_per_day);
    for (std::uint32_t k = 0; k < intervals_per_day; ++k) {
      double hour = 24.0 * k / intervals_per_day;
      std::uint32_t rate;
      if (hour < 6.0) {
        rate = 18;
      } else if (hour < 8.5) {
        rate = 31;
      } else if (hour < 17.0) {
        rate = 27;
      } else if (hour < 21.0) {
        rate = 42;
      } else {
        rate = 24;
      }
      s.daily_rates[k] = rate;
    }
    return s;
  }

  Tariff tariff_for(IntervalIndex i0, std::size_t n) const {
    if (daily_rates.empty()) throw Error(ErrorCode::kConfig, "empty tariff schedule");
    Tariff t{i0, {}};
    t.rates.reserve(n);
    for (std::size_t k = 0; k < n; ++k) t.rates.push_back(daily_rates[(i0 + k) % daily_rates.size()]);
    return t;
  }
};

// ---------------------------------------------------------------------------
// Back-end system

inline std::string comm_digest_hex(std::span<const Bytes> encoded) {
  ByteWriter w;
  for (const Bytes& c : encoded) w.raw(c);
  return to_hex(sha256(w.bytes()));
}

template <PrimeOrderGroup G>
class Backend {
 public:
  Backend(GroupParams<G> params, BillingLedger& ledger,
          std::optional<TariffSchedule> schedule = std::nullopt)
      : params_(std::move(params)), ledger_(ledger), schedule_(std::move(schedule)) {}

  const GroupParams<G>& params() const { return params_; }
  TariffStore& tariffs() { return tariffs_; }
  BillingLedger& ledger() { return ledger_; }

  void register_meter(const std::string& meter_id, const PublicKey& pk) {
    std::lock_guard lock(mu_);
    meters_[meter_id] = pk;
  }

  std::optional<PublicKey> meter_key(const std::string& meter_id) const {
    std::lock_guard lock(mu_);
    auto it = meters_.find(meter_id);
    if (it == meters_.end()) return std::nullopt;
    return it->second;
  }

  void publish_tariff(const std::string& meter_id, const Tariff& tariff) {
    tariffs_.publish(meter_id, tariff);
  }

  // Serves the published tariff; with a schedule configured, unpublished
  // ranges for known meters are published from it first.
  Tariff serve_tariff(const std::string& meter_id, IntervalIndex i0, std::size_t n) {
    if (schedule_ && n > 0 && !tariffs_.contains(meter_id, i0, n) && meter_key(meter_id)) {
      tariffs_.publish(meter_id, schedule_->tariff_for(i0, n));
    }
    return tariffs_.serve(meter_id, i0, n);
  }

  // Verifies a billing report against the registered key and the tariff
  // published for its range, then records the verdict.
  Verdict receive(const BillingReport<G>& report) {
    Verdict verdict = check(report);
    record(report, verdict);
    return verdict;
  }

  Verdict check(const BillingReport<G>& report) const {
    auto pk = meter_key(report.meter_id);
    if (!pk) return Verdict::reject(RejectReason::kUnknownMeter, "unknown meter " + report.meter_id);
    auto tariff = tariffs_.lookup(report.meter_id, report.i0, report.commitments.size());
    if (!tariff) {
      // A forged i0 or n usually lands here; report the forgery, not the lookup miss.
      if (!verify_report_signature<G>(*pk, report.i0, report.commitments, report.signature)) {
        return Verdict::reject(RejectReason::kBadSignature, "signature over (i0, COMM) is invalid");
      }
      return Verdict::reject(RejectReason::kUnknownTariff,
                             "no tariff published for this range");
    }
    return verify_billing(params_, *pk, *tariff, report);
  }

  // Unstripped table: priced here, recorded without the plaintext columns.
  Verdict receive_pass_through(const CommitmentReport<G>& report) {
    BillingReport<G> summary;
    summary.meter_id = report.meter_id;
    summary.i0 = report.i0;
    summary.commitments = report.commitments();
    summary.signature = report.signature;
    summary.r_prime = G::scalar(std::uint64_t{0});

    Verdict verdict;
    auto pk = meter_key(report.meter_id);
    auto tariff = tariffs_.lookup(report.meter_id, report.i0, report.rows.size());
    if (!tariff && pk && schedule_) {
      // Nobody fetched a tariff on this path; price from the schedule.
      tariffs_.publish(report.meter_id, schedule_->tariff_for(report.i0, report.rows.size()));
      tariff = tariffs_.lookup(report.meter_id, report.i0, report.rows.size());
    }
    if (!pk) {
      verdict = Verdict::reject(RejectReason::kUnknownMeter, "unknown meter " + report.meter_id);
    } else if (!tariff) {
      verdict = Verdict::reject(RejectReason::kUnknownTariff, "no tariff published for this range");
    } else {
      verdict = verify_meter_report(params_, *pk, *tariff, report);
      if (verdict.accepted) {
        std::vector<typename G::Scalar> r;
        ConsumptionProfile profile{report.i0, {}};
        for (const auto& row : report.rows) {
          profile.values.push_back(row.value);
          r.push_back(row.r);
        }
        summary.price = compute_price(profile, *tariff);
        summary.r_prime = compute_r_prime<G>(r, *tariff);
      }
    }
    record(summary, verdict, "pass-through");
    return verdict;
  }

  LedgerRecord record(const BillingReport<G>& report, const Verdict& verdict,
                      std::string mode = "privacy") {
    LedgerRecord rec;
    rec.meter_id = report.meter_id;
    rec.i0 = report.i0;
    rec.n = report.commitments.size();
    rec.price = report.price;
    rec.r_prime = to_hex(G::encode_scalar(report.r_prime));
    std::vector<Bytes> encoded;
    for (const auto& c : report.commitments) {
      encoded.push_back(G::encode(c.c));
      rec.commitments.push_back(to_hex(encoded.back()));
    }
    rec.comm_digest = comm_digest_hex(encoded);
    rec.signature = to_hex(report.signature);
    rec.accepted = verdict.accepted;
    rec.reason = std::string(to_string(verdict.reason));
    rec.mode = std::move(mode);
    return ledger_.append(std::move(rec));
  }

 private:
  GroupParams<G> params_;
  BillingLedger& ledger_;
  std::optional<TariffSchedule> schedule_;
  TariffStore tariffs_;
  mutable std::mutex mu_;
  std::map<std::string, PublicKey> meters_;
};

// ---------------------------------------------------------------------------
// Throughput

template <PrimeOrderGroup G>
struct BenchItem {
  PublicKey pk;
  Tariff tariff;
  BillingReport<G> report;
};

struct BenchOptions {
  std::size_t workers = 1;
  // Fraction of reports actually verified (random spot-checking).
  double sampling_rate = 1.0;
  // Fixed seed for the spot-check draw; unset draws from the OS.
  std::optional<std::uint64_t> seed;
};

struct BenchReport {
  std::size_t attempted = 0;
  std::size_t verified = 0;
  std::size_t skipped = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t workers = 1;
  double wall_seconds = 0;
  double verifications_per_second = 0;
  double per_day_equivalent = 0;
  double mean_ms = 0;
  double p50_ms = 0;
  double p90_ms = 0;
  double p99_ms = 0;
  double max_ms = 0;
};

inline double percentile(std::vector<double> sorted, double p) {
  if (sorted.empty()) return 0;
  std::sort(sorted.begin(), sorted.end());
  double rank = p * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(rank);
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = rank - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

template <PrimeOrderGroup G>
BenchReport bench_verify(const GroupParams<G>& params, std::span<const BenchItem<G>> batch,
                         const BenchOptions& options = {}) {
  using Clock = std::chrono::steady_clock;
  BenchReport out;
  out.attempted = batch.size();
  out.workers = std::max<std::size_t>(1, options.workers);

  std::vector<std::size_t> selected;
  {
    std::unique_ptr<RandomSource> rng;
    if (options.seed) {
      rng = std::make_unique<SeededRandom>(*options.seed, "spot-check");
    } else {
      rng = std::make_unique<SystemRandom>();
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (options.sampling_rate >= 1.0 || rng->unit() < options.sampling_rate) selected.push_back(i);
    }
  }
  out.verified = selected.size();
  out.skipped = batch.size() - selected.size();

  std::vector<double> latency_ms(selected.size());
  std::vector<char> ok(selected.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t j = next.fetch_add(1);
      if (j >= selected.size()) return;
      const auto& item = batch[selected[j]];
      auto t0 = Clock::now();
      ok[j] = verify_billing(params, item.pk, item.tariff, item.report).accepted;
      latency_ms[j] = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    }
  };

  auto start = Clock::now();
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < out.workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  out.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();

  out.accepted = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 1));
  out.rejected = out.verified - out.accepted;
  if (!latency_ms.empty()) {
    double sum = 0;
    for (double v : latency_ms) sum += v;
    out.mean_ms = sum / static_cast<double>(latency_ms.size());
    out.p50_ms = percentile(latency_ms, 0.50);
    out.p90_ms = percentile(latency_ms, 0.90);
    out.p99_ms = percentile(latency_ms, 0.99);
    out.max_ms = *std::max_element(latency_ms.begin(), latency_ms.end());
  }
  if (out.wall_seconds > 0) {
    out.verifications_per_second = static_cast<double>(out.verified) / out.wall_seconds;
    out.per_day_equivalent = out.verifications_per_second * 86400.0;
  }
  return out;
}

}  // namespace pbill
