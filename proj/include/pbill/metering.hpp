#pragma once

#include <charconv>
#include <cstdint>
#include <deque>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "pbill/group/params.hpp"
#include "pbill/pedersen.hpp"
#include "pbill/random.hpp"
#include "pbill/signature.hpp"

namespace pbill {

// Interval number counted from a fictive first interval, like a UNIX time
// stamp counts seconds.
using IntervalIndex = std::uint64_t;

inline constexpr std::uint32_t kIntervalsPerDay = 96;

// Consumption units per interval; value k belongs to interval i0 + k.
struct ConsumptionProfile {
  IntervalIndex i0 = 0;
  std::vector<std::uint32_t> values;

  std::size_t size() const { return values.size(); }

  void validate() const {
    if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "consumption profile is empty");
    if (values.size() - 1 > UINT64_MAX - i0) {
      throw Error(ErrorCode::kInvalidArgument, "profile runs past the last interval index");
    }
  }
};

// ---------------------------------------------------------------------------
// Profile sources

struct ConstantSource {
  std::uint32_t level = 0;
};

// Day/night base load with noise and random appliance spikes. The value of
// an interval depends only on (seed, interval index), so profiles are
// reproducible however a day is split into reporting periods.
struct SyntheticHousehold {
  std::uint64_t seed = 0;
  std::uint32_t intervals_per_day = kIntervalsPerDay;
};

// CSV with header `interval,value`, one row per interval.
struct CsvSource {
  std::map<IntervalIndex, std::uint32_t> rows;

  static CsvSource parse(std::istream& in) {
    auto trim = [](std::string s) {
      while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
      std::size_t p = s.find_first_not_of(" \t");
      return p == std::string::npos ? std::string() : s.substr(p);
    };
    std::string line;
    if (!std::getline(in, line) || trim(line) != "interval,value") {
      throw DecodeError("csv: expected header 'interval,value'");
    }
    CsvSource src;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      line = trim(line);
      if (line.empty()) continue;
      auto comma = line.find(',');
      if (comma == std::string::npos) {
        throw DecodeError("csv line " + std::to_string(line_no) + ": missing comma");
      }
      std::string a = trim(line.substr(0, comma));
      std::string b = trim(line.substr(comma + 1));
      std::uint64_t interval = 0;
      std::int64_t value = 0;
      auto r1 = std::from_chars(a.data(), a.data() + a.size(), interval);
      auto r2 = std::from_chars(b.data(), b.data() + b.size(), value);
      if (r1.ec != std::errc() || r1.ptr != a.data() + a.size() || r2.ec != std::errc() ||
          r2.ptr != b.data() + b.size()) {
        throw DecodeError("csv line " + std::to_string(line_no) + ": not an integer pair");
      }
      if (value < 0) {
        throw DecodeError("csv line " + std::to_string(line_no) + ": negative consumption");
      }
      if (value > static_cast<std::int64_t>(UINT32_MAX)) {
        throw DecodeError("csv line " + std::to_string(line_no) + ": value exceeds 2^32-1");
      }
      if (!src.rows.emplace(interval, static_cast<std::uint32_t>(value)).second) {
        throw DecodeError("csv line " + std::to_string(line_no) + ": duplicate interval");
      }
    }
    return src;
  }

  static CsvSource load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open csv file " + path);
    return parse(in);
  }
};

using ProfileSource = std::variant<ConstantSource, SyntheticHousehold, CsvSource>;

inline std::uint32_t synthetic_value(const SyntheticHousehold& model, IntervalIndex interval) {
  SeededRandom rng = SeededRandom(model.seed, "synthetic-household").fork("interval", interval);
  const std::uint32_t per_day = model.intervals_per_day == 0 ? kIntervalsPerDay
                                                             : model.intervals_per_day;
  const double hour = 24.0 * static_cast<double>(interval % per_day) / per_day;
  std::uint32_t base;
  if (hour < 6.0) {
    base = 55;
  } else if (hour < 8.5) {
    base = 140;
  } else if (hour < 17.0) {
    base = 90;
  } else if (hour < 22.0) {
    base = 210;
  } else {
    base = 110;
  }
  std::uint32_t value = base - 15 + static_cast<std::uint32_t>(rng.uniform(31));
  if (rng.unit() < 0.06) value += 150 + static_cast<std::uint32_t>(rng.uniform(751));
  return value;
}

inline ConsumptionProfile generate_profile(const ProfileSource& source, IntervalIndex i0,
                                           std::size_t n) {
  ConsumptionProfile profile{i0, {}};
  profile.values.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const IntervalIndex interval = i0 + k;
    std::visit(
        [&](const auto& src) {
          using S = std::decay_t<decltype(src)>;
          if constexpr (std::is_same_v<S, ConstantSource>) {
            profile.values.push_back(src.level);
          } else if constexpr (std::is_same_v<S, SyntheticHousehold>) {
            profile.values.push_back(synthetic_value(src, interval));
          } else {
            auto it = src.rows.find(interval);
            if (it == src.rows.end()) {
              throw DecodeError("csv: no reading for interval " + std::to_string(interval));
            }
            profile.values.push_back(it->second);
          }
        },
        source);
  }
  profile.validate();
  return profile;
}

// ---------------------------------------------------------------------------
// Reports

template <PrimeOrderGroup G>
struct ReportRow {
  IntervalIndex interval = 0;
  std::uint32_t value = 0;
  Commitment<G> commitment;
  typename G::Scalar r;
  bool operator==(const ReportRow&) const = default;
};

// The meter's column table (i, v_i, Comm_i, r_i) plus SIG over (i0, COMM).
template <PrimeOrderGroup G>
struct CommitmentReport {
  std::string meter_id;
  IntervalIndex i0 = 0;
  std::vector<ReportRow<G>> rows;
  Bytes signature;

  std::vector<Commitment<G>> commitments() const {
    std::vector<Commitment<G>> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(row.commitment);
    return out;
  }
  bool operator==(const CommitmentReport&) const = default;
};

// Canonical signed bytes: u64 big-endian i0 followed by every commitment's
// canonical encoding in row order.
inline Bytes signing_payload(IntervalIndex i0, std::span<const Bytes> encoded_commitments) {
  ByteWriter w;
  w.u64(i0);
  for (const Bytes& c : encoded_commitments) w.raw(c);
  return w.take();
}

template <PrimeOrderGroup G>
Bytes signing_payload(IntervalIndex i0, std::span<const Commitment<G>> commitments) {
  ByteWriter w;
  w.u64(i0);
  for (const auto& c : commitments) w.raw(G::encode(c.c));
  return w.take();
}

template <PrimeOrderGroup G>
bool verify_report_signature(const PublicKey& pk, IntervalIndex i0,
                             std::span<const Commitment<G>> commitments, ByteView sig) {
  return verify_signature(pk, signing_payload<G>(i0, commitments), sig);
}

// Commits v_k mod q with the supplied blinding values.
template <PrimeOrderGroup G>
CommitmentReport<G> build_report(const GroupParams<G>& params, const MeterKeypair& keys,
                                 const ConsumptionProfile& profile,
                                 std::span<const typename G::Scalar> randomness) {
  profile.validate();
  if (randomness.size() != profile.size()) {
    throw Error(ErrorCode::kMisaligned, "one blinding value per interval is required");
  }
  CommitmentReport<G> report;
  report.meter_id = keys.meter_id();
  report.i0 = profile.i0;
  report.rows.reserve(profile.size());
  for (std::size_t k = 0; k < profile.size(); ++k) {
    const std::uint32_t v = profile.values[k];
    report.rows.push_back(
        {profile.i0 + k, v, commit(params, G::scalar(std::uint64_t{v}), randomness[k]),
         randomness[k]});
  }
  auto comm = report.commitments();
  report.signature = keys.sign(signing_payload<G>(report.i0, std::span(comm)));
  return report;
}

template <PrimeOrderGroup G>
CommitmentReport<G> build_report(const GroupParams<G>& params, const MeterKeypair& keys,
                                 const ConsumptionProfile& profile, RandomSource& rng) {
  profile.validate();
  std::vector<typename G::Scalar> randomness;
  randomness.reserve(profile.size());
  for (std::size_t k = 0; k < profile.size(); ++k) randomness.push_back(G::random_scalar(rng));
  return build_report(params, keys, profile, std::span<const typename G::Scalar>(randomness));
}

// Meter emulator. Blinding factors (r, h^r) do not depend on the readings,
// so they can be computed ahead of time while the meter is idle; reporting
// then only costs g^v and one group operation per interval.
template <PrimeOrderGroup G>
class SmartMeter {
 public:
  SmartMeter(GroupParams<G> params, MeterKeypair keys, std::unique_ptr<RandomSource> rng)
      : params_(std::move(params)), keys_(std::move(keys)), rng_(std::move(rng)) {}

  const MeterKeypair& keys() const { return keys_; }
  const GroupParams<G>& params() const { return params_; }
  std::size_t pooled() const { return pool_.size(); }

  void precompute_blinding(std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      auto r = G::random_scalar(*rng_);
      pool_.push_back({r, G::exp(params_.h, r)});
    }
  }

  CommitmentReport<G> report(const ConsumptionProfile& profile) {
    profile.validate();
    if (pool_.size() < profile.size()) precompute_blinding(profile.size() - pool_.size());
    CommitmentReport<G> out;
    out.meter_id = keys_.meter_id();
    out.i0 = profile.i0;
    out.rows.reserve(profile.size());
    for (std::size_t k = 0; k < profile.size(); ++k) {
      Blinding b = pool_.front();
      pool_.pop_front();
      const std::uint32_t v = profile.values[k];
      Commitment<G> c{G::mul(G::exp(params_.g, G::scalar(std::uint64_t{v})), b.h_to_r)};
      out.rows.push_back({profile.i0 + k, v, c, b.r});
    }
    auto comm = out.commitments();
    out.signature = keys_.sign(signing_payload<G>(out.i0, std::span(comm)));
    return out;
  }

 private:
  struct Blinding {
    typename G::Scalar r;
    typename G::Element h_to_r;
  };

  GroupParams<G> params_;
  MeterKeypair keys_;
  std::unique_ptr<RandomSource> rng_;
  std::deque<Blinding> pool_;
};

}  // namespace pbill
