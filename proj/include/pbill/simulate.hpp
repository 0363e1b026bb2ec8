#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "pbill/backend.hpp"
#include "pbill/metering.hpp"
#include "pbill/parties.hpp"
#include "pbill/privacy.hpp"
#include "pbill/wire.hpp"

namespace pbill {

struct SimulationOptions {
  std::uint32_t days = 1;
  std::uint32_t meters = 1;
  std::uint32_t intervals_per_day = kIntervalsPerDay;
  std::size_t workers = 1;
  // Test mode only: makes keys, profiles and blinding values reproducible.
  std::optional<std::uint64_t> seed;
};

// Mean wall time per session for each party, in milliseconds. The meter's
// blinding precomputation is idle-time work and is reported on its own.
struct StageTimings {
  double sm_offline_ms = 0;
  double sm_ms = 0;
  double pc_ms = 0;
  double bs_ms = 0;
};

struct SimulationSummary {
  std::uint64_t sessions = 0;
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;
  StageTimings mean;
  // SHA-256 over every forwarded privacy-form frame and its verdict, in
  // (meter, day) order. Equal seeds give equal digests.
  std::string transcript_digest;
  std::vector<std::string> rejections;
};

inline nlohmann::ordered_json to_json(const SimulationSummary& s) {
  nlohmann::ordered_json j;
  j["sessions"] = s.sessions;
  j["accepted"] = s.accepted;
  j["rejected"] = s.rejected;
  j["acceptance_rate"] = s.sessions == 0 ? 0.0 : static_cast<double>(s.accepted) / s.sessions;
  j["mean_ms"] = {{"sm_offline", s.mean.sm_offline_ms},
                  {"sm", s.mean.sm_ms},
                  {"pc", s.mean.pc_ms},
                  {"bs", s.mean.bs_ms}};
  j["transcript_digest"] = s.transcript_digest;
  j["rejections"] = s.rejections;
  return j;
}

namespace detail {

inline std::unique_ptr<RandomSource> party_rng(const std::optional<std::uint64_t>& seed,
                                               std::string_view label, std::uint64_t index) {
  if (seed) return std::make_unique<SeededRandom>(SeededRandom(*seed).fork(label, index));
  return std::make_unique<SystemRandom>();
}

}  // namespace detail

// Runs meters x days billing sessions through the three parties in one
// process: SmartMeter -> PrivacyComponent -> Backend, with the wire codec
// in between so every report crosses a real encode/decode.
template <PrimeOrderGroup G>
SimulationSummary run_simulation(const GroupParams<G>& params, const SimulationOptions& options,
                                 BillingLedger& ledger) {
  using Clock = std::chrono::steady_clock;
  auto ms_since = [](Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  };

  Backend<G> backend(params, ledger, TariffSchedule::time_of_use(options.intervals_per_day));
  LocalTariffSource<G> tariffs(backend);

  struct MeterResult {
    std::vector<Bytes> transcript;
    std::vector<std::string> rejections;
    std::uint64_t accepted = 0;
    StageTimings total;
  };
  std::vector<MeterResult> results(options.meters);

  auto run_meter = [&](std::uint32_t m) {
    MeterResult& out = results[m];
    const std::string meter_id = "meter-" + std::to_string(m);
    auto key_rng = detail::party_rng(options.seed, "meter-key", m);
    auto household_rng = detail::party_rng(options.seed, "household", m);
    MeterKeypair keys = MeterKeypair::generate(meter_id, *key_rng);
    backend.register_meter(meter_id, keys.public_key());
    SmartMeter<G> meter(params, std::move(keys), detail::party_rng(options.seed, "blinding", m));
    const ProfileSource household = SyntheticHousehold{household_rng->next_u64(),
                                                       options.intervals_per_day};
    PrivacyComponent<G> pc(params, tariffs, true);

    for (std::uint32_t day = 0; day < options.days; ++day) {
      const IntervalIndex i0 = IntervalIndex{day} * options.intervals_per_day;
      ConsumptionProfile profile = generate_profile(household, i0, options.intervals_per_day);

      auto t0 = Clock::now();
      meter.precompute_blinding(profile.size());
      out.total.sm_offline_ms += ms_since(t0);

      t0 = Clock::now();
      Bytes meter_frame = wire::encode_message(wire::to_table(meter.report(profile)));
      out.total.sm_ms += ms_since(t0);

      t0 = Clock::now();
      auto decoded = wire::decode_message(meter_frame);
      pc.enqueue(wire::commitment_report_from<G>(std::get<wire::MeterTable>(decoded)));
      Bytes billing_frame;
      pc.process_next([&](const TransformResult<G>& r) {
        billing_frame = wire::encode_message(wire::to_table(r.report));
      });
      out.total.pc_ms += ms_since(t0);
      if (billing_frame.empty()) {
        out.rejections.push_back(meter_id + " day " + std::to_string(day) + ": " +
                                 pc.failed().back().reason);
        continue;
      }

      t0 = Clock::now();
      auto billing = wire::billing_report_from<G>(
          std::get<wire::PrivacyTable>(wire::decode_message(billing_frame)));
      Verdict v = backend.receive(billing);
      out.total.bs_ms += ms_since(t0);

      out.transcript.push_back(std::move(billing_frame));
      out.transcript.push_back(
          wire::encode_message(to_message(billing.meter_id, billing.i0, v)));
      if (v.accepted) {
        ++out.accepted;
      } else {
        out.rejections.push_back(meter_id + " day " + std::to_string(day) + ": " +
                                 std::string(to_string(v.reason)) + " " + v.detail);
      }
    }
  };

  std::atomic<std::uint32_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::uint32_t m = next.fetch_add(1);
      if (m >= options.meters) return;
      run_meter(m);
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < std::max<std::size_t>(1, options.workers); ++w) {
    threads.emplace_back(worker);
  }
  worker();
  for (auto& t : threads) t.join();

  SimulationSummary summary;
  summary.sessions = std::uint64_t{options.meters} * options.days;
  crypto_hash_sha256_state digest;
  crypto_hash_sha256_init(&digest);
  StageTimings total;
  for (const MeterResult& r : results) {
    summary.accepted += r.accepted;
    for (const Bytes& b : r.transcript) crypto_hash_sha256_update(&digest, b.data(), b.size());
    summary.rejections.insert(summary.rejections.end(), r.rejections.begin(), r.rejections.end());
    total.sm_offline_ms += r.total.sm_offline_ms;
    total.sm_ms += r.total.sm_ms;
    total.pc_ms += r.total.pc_ms;
    total.bs_ms += r.total.bs_ms;
  }
  summary.rejected = summary.sessions - summary.accepted;
  std::array<std::uint8_t, crypto_hash_sha256_BYTES> out{};
  crypto_hash_sha256_final(&digest, out.data());
  summary.transcript_digest = to_hex(out);
  if (summary.sessions > 0) {
    const double s = static_cast<double>(summary.sessions);
    summary.mean = {total.sm_offline_ms / s, total.sm_ms / s, total.pc_ms / s, total.bs_ms / s};
  }
  return summary;
}

// Honest billing reports at n intervals each, as input for bench_verify.
template <PrimeOrderGroup G>
std::vector<BenchItem<G>> make_bench_batch(const GroupParams<G>& params, std::size_t count,
                                           std::size_t n, RandomSource& rng) {
  MeterKeypair keys = MeterKeypair::generate("bench-meter", rng);
  const TariffSchedule schedule = TariffSchedule::time_of_use();
  const SyntheticHousehold household{rng.next_u64(), kIntervalsPerDay};
  std::vector<BenchItem<G>> batch;
  batch.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const IntervalIndex i0 = IntervalIndex{i} * n;
    ConsumptionProfile profile = generate_profile(household, i0, n);
    Tariff tariff = schedule.tariff_for(i0, n);
    auto report = build_report(params, keys, profile, rng);
    batch.push_back({keys.public_key(), tariff, transform_report(params, report, tariff, false).report});
  }
  return batch;
}

}  // namespace pbill
