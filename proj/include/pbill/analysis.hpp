#pragma once

#include <boost/math/distributions/chi_squared.hpp>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pbill/backend.hpp"
#include "pbill/metering.hpp"
#include "pbill/pedersen.hpp"
#include "pbill/privacy.hpp"

namespace pbill::analysis {

// ---------------------------------------------------------------------------
// Simulator

// What the back-end sees of one billing run, minus the signature.
template <PrimeOrderGroup G>
struct SimulatedView {
  std::vector<Commitment<G>> comm_column;
  typename G::Scalar r_prime;
  BigInt price = 0;
};

// Builds a view from the tariff and the price alone. r' and all but one
// commitment are uniform; the commitment at the lowest index whose rate is
// invertible mod q is solved for, so the tariff-weighted fold opens to
// (price, r'). Only the opening relation is simulated: the meter signature
// is out of reach for a simulator without the signing key.
template <PrimeOrderGroup G>
SimulatedView<G> simulate_view(const GroupParams<G>& params, const Tariff& tariff,
                               const BigInt& price, RandomSource& rng) {
  using Scalar = typename G::Scalar;
  const std::size_t n = tariff.size();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "empty tariff");

  std::optional<std::size_t> pivot;
  std::vector<Scalar> rates;
  rates.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    rates.push_back(G::scalar(std::uint64_t{tariff.rates[k]}));
    if (!pivot && !G::is_zero(rates.back())) pivot = k;
  }

  SimulatedView<G> view;
  view.price = price;
  view.comm_column.resize(n);
  auto random_element = [&] { return Commitment<G>{G::exp(params.g, G::random_scalar(rng))}; };

  if (!pivot) {
    // Every weight vanishes, so the fold is the identity and only
    // commit(0, 0) can match it.
    if (!G::is_zero(G::scalar(price))) {
      throw Error(ErrorCode::kInvalidArgument,
                  "all tariff rates vanish mod q but the price does not");
    }
    view.r_prime = G::scalar(std::uint64_t{0});
    for (auto& c : view.comm_column) c = random_element();
    return view;
  }

  view.r_prime = G::random_scalar(rng);
  typename G::Element rest = G::identity();
  for (std::size_t k = 0; k < n; ++k) {
    if (k == *pivot) continue;
    view.comm_column[k] = random_element();
    rest = G::mul(rest, G::exp(view.comm_column[k].c, rates[k]));
  }
  const auto target = commit(params, G::scalar(price), view.r_prime).c;
  view.comm_column[*pivot] = {
      G::exp(G::mul(target, G::inverse(rest)), G::invert(rates[*pivot]))};
  return view;
}

// ---------------------------------------------------------------------------
// Honest runs

// Transcript of one honest meter -> privacy component -> back-end run.
template <PrimeOrderGroup G>
struct HonestSession {
  PublicKey meter_key;
  ConsumptionProfile profile;
  Tariff tariff;
  CommitmentReport<G> meter_report;
  BillingReport<G> billing;
};

template <PrimeOrderGroup G>
HonestSession<G> run_honest_session(const GroupParams<G>& params, const MeterKeypair& keys,
                                    ConsumptionProfile profile, Tariff tariff,
                                    RandomSource& rng) {
  HonestSession<G> s;
  s.meter_key = keys.public_key();
  s.meter_report = build_report(params, keys, profile, rng);
  s.billing = transform_report(params, s.meter_report, tariff, false).report;
  s.profile = std::move(profile);
  s.tariff = std::move(tariff);
  return s;
}

// ---------------------------------------------------------------------------
// Mutations

enum class TamperField { kPrice, kRPrime, kCommitment, kI0, kTariffMismatch };

inline constexpr TamperField kAllTamperFields[] = {TamperField::kPrice, TamperField::kRPrime,
                                                  TamperField::kCommitment, TamperField::kI0,
                                                  TamperField::kTariffMismatch};

inline std::string_view to_string(TamperField f) {
  switch (f) {
    case TamperField::kPrice: return "price";
    case TamperField::kRPrime: return "r_prime";
    case TamperField::kCommitment: return "comm";
    case TamperField::kI0: return "i0";
    case TamperField::kTariffMismatch: return "tariff";
  }
  return "unknown";
}

inline std::optional<TamperField> tamper_field_from_string(std::string_view s) {
  for (TamperField f : kAllTamperFields) {
    if (to_string(f) == s) return f;
  }
  return std::nullopt;
}

// One single-field change to an honest transcript.
//   price:  price + delta (integer, may be negative)
//   r_prime: r' + delta mod q
//   comm:   Comm_index * g^delta
//   i0:     i0 + delta mod 2^64
//   tariff: the privacy component bills with rate_index + delta while the
//           back-end holds the published tariff
struct Mutation {
  TamperField field = TamperField::kPrice;
  std::size_t index = 0;
  BigInt delta = 1;
};

inline std::string describe(const Mutation& m) {
  std::string s(to_string(m.field));
  if (m.field == TamperField::kCommitment || m.field == TamperField::kTariffMismatch) {
    s += "[" + std::to_string(m.index) + "]";
  }
  return s + " delta=" + m.delta.str();
}

template <PrimeOrderGroup G>
struct TamperedRun {
  Mutation mutation;
  BillingReport<G> report;
  RejectReason expected = RejectReason::kOpeningFailed;
  // The forged report equals the honest one (tariff change at a row with
  // v = r = 0), so there is nothing to detect.
  bool vacuous = false;
  // The changed row commits to the identity, so Comm^delta = 1 and the
  // forged opening is genuine. Any q-order group has such rows; with q = 11
  // they are common, with q ~ 2^252 they never occur in practice.
  bool binding_collision = false;
};

template <PrimeOrderGroup G>
typename G::Scalar reduce_delta(const BigInt& delta) {
  BigInt r = delta % G::order();
  if (r < 0) r += G::order();
  return G::scalar(r);
}

template <PrimeOrderGroup G>
TamperedRun<G> apply_mutation(const GroupParams<G>& params, const HonestSession<G>& session,
                              const Mutation& m) {
  TamperedRun<G> out;
  out.mutation = m;
  out.report = session.billing;
  BillingReport<G>& r = out.report;
  const std::size_t n = r.commitments.size();

  switch (m.field) {
    case TamperField::kPrice:
      r.price += m.delta;
      out.expected = (r.price < 0 || r.price >= kPriceBound) ? RejectReason::kPriceOutOfRange
                                                             : RejectReason::kOpeningFailed;
      break;
    case TamperField::kRPrime:
      r.r_prime = G::add(r.r_prime, reduce_delta<G>(m.delta));
      out.expected = RejectReason::kOpeningFailed;
      break;
    case TamperField::kCommitment: {
      if (m.index >= n) throw Error(ErrorCode::kInvalidArgument, "commitment index out of range");
      auto& c = r.commitments[m.index].c;
      c = G::mul(c, G::exp(params.g, reduce_delta<G>(m.delta)));
      out.expected = RejectReason::kBadSignature;
      break;
    }
    case TamperField::kI0: {
      const BigInt mod = BigInt(1) << 64;
      BigInt shifted = (BigInt(r.i0) + m.delta) % mod;
      if (shifted < 0) shifted += mod;
      r.i0 = static_cast<std::uint64_t>(shifted);
      out.expected = RejectReason::kBadSignature;
      break;
    }
    case TamperField::kTariffMismatch: {
      if (m.index >= n) throw Error(ErrorCode::kInvalidArgument, "tariff index out of range");
      Tariff forged = session.tariff;
      BigInt rate = BigInt(forged.rates[m.index]) + m.delta;
      if (rate < 0 || rate > UINT32_MAX) {
        throw Error(ErrorCode::kInvalidArgument, "forged rate does not fit 32 bits");
      }
      forged.rates[m.index] = static_cast<std::uint32_t>(rate);
      r = transform_report(params, session.meter_report, forged, false).report;
      out.expected = RejectReason::kOpeningFailed;
      out.binding_collision = session.billing.commitments[m.index].c == G::identity() &&
                              !G::is_zero(reduce_delta<G>(m.delta));
      break;
    }
  }
  out.vacuous = out.report == session.billing;
  if (out.vacuous) out.binding_collision = false;
  return out;
}

// Random single-field mutation with a non-trivial delta: deltas that are
// multiples of q are never drawn for mod-q fields, since they leave the
// group-level transcript unchanged.
template <PrimeOrderGroup G>
TamperedRun<G> mutate_session(const GroupParams<G>& params, const HonestSession<G>& session,
                              TamperField field, RandomSource& rng) {
  const std::size_t n = session.billing.commitments.size();
  Mutation m;
  m.field = field;
  auto nonzero_scalar_delta = [&] {
    for (;;) {
      auto s = G::random_scalar(rng);
      if (!G::is_zero(s)) return G::to_bigint(s);
    }
  };
  switch (field) {
    case TamperField::kPrice:
    case TamperField::kRPrime:
    case TamperField::kCommitment:
      m.delta = nonzero_scalar_delta();
      if (field == TamperField::kPrice) {
        // Keep the forged bill plausible: a small shift in either direction.
        BigInt bound = G::order() - 1;
        if (bound > BigInt(1) << 32) bound = BigInt(1) << 32;
        m.delta = 1 + BigInt(rng.uniform(static_cast<std::uint64_t>(bound)));
        if (session.billing.price >= m.delta && rng.uniform(2) == 1) m.delta = -m.delta;
      }
      break;
    case TamperField::kI0:
      m.delta = 1 + rng.uniform(UINT64_MAX);
      break;
    case TamperField::kTariffMismatch: {
      m.delta = 1 + rng.uniform(1000);
      const BigInt q = G::order();
      if (m.delta % q == 0) m.delta += 1;
      break;
    }
  }
  if (field == TamperField::kCommitment || field == TamperField::kTariffMismatch) {
    m.index = static_cast<std::size_t>(rng.uniform(n));
  }
  return apply_mutation(params, session, m);
}

// Every mutation of the given session with deltas in [1, q-1] (and the
// negative price shifts that keep the price non-negative). For i0 the same
// delta range is used. Meant for the small test group.
template <PrimeOrderGroup G>
std::vector<Mutation> exhaustive_mutations(const HonestSession<G>& session) {
  const std::size_t n = session.billing.commitments.size();
  const auto q = static_cast<std::uint64_t>(G::order());
  std::vector<Mutation> out;
  for (std::uint64_t d = 1; d < q; ++d) {
    const BigInt delta(d);
    out.push_back({TamperField::kPrice, 0, delta});
    if (session.billing.price >= delta) out.push_back({TamperField::kPrice, 0, -delta});
    out.push_back({TamperField::kRPrime, 0, delta});
    out.push_back({TamperField::kI0, 0, delta});
    for (std::size_t k = 0; k < n; ++k) {
      out.push_back({TamperField::kCommitment, k, delta});
      out.push_back({TamperField::kTariffMismatch, k, delta});
    }
  }
  return out;
}

// Tally of a soundness run, keyed by field.
struct SoundnessTally {
  struct Row {
    std::uint64_t attempted = 0;
    std::uint64_t rejected = 0;
    std::uint64_t wrong_reason = 0;
    std::uint64_t accepted = 0;
    std::uint64_t vacuous = 0;
    std::uint64_t binding_collisions = 0;
  };
  std::map<TamperField, Row> rows;
  std::vector<std::string> failures;  // first few offending mutations

  // A run is sound when every non-vacuous, non-collision mutation was
  // rejected for the expected reason.
  bool sound() const {
    for (const auto& [field, row] : rows) {
      if (row.accepted > 0 || row.wrong_reason > 0) return false;
    }
    return true;
  }

  Row total() const {
    Row t;
    for (const auto& [field, row] : rows) {
      t.attempted += row.attempted;
      t.rejected += row.rejected;
      t.wrong_reason += row.wrong_reason;
      t.accepted += row.accepted;
      t.vacuous += row.vacuous;
      t.binding_collisions += row.binding_collisions;
    }
    return t;
  }
};

template <PrimeOrderGroup G>
void record_outcome(SoundnessTally& tally, const GroupParams<G>& params,
                    const HonestSession<G>& session, const TamperedRun<G>& run) {
  auto& row = tally.rows[run.mutation.field];
  ++row.attempted;
  if (run.vacuous) {
    ++row.vacuous;
    return;
  }
  const Verdict v = verify_billing(params, session.meter_key, session.tariff, run.report);
  if (run.binding_collision && v.accepted) {
    ++row.binding_collisions;
    return;
  }
  auto note = [&](std::string what) {
    if (tally.failures.size() < 16) tally.failures.push_back(what + ": " + describe(run.mutation));
  };
  if (v.accepted) {
    ++row.accepted;
    note("accepted");
  } else if (v.reason != run.expected) {
    ++row.wrong_reason;
    note("rejected as " + std::string(pbill::to_string(v.reason)) + ", expected " +
         std::string(pbill::to_string(run.expected)));
  } else {
    ++row.rejected;
  }
}

// Soundness drivers. `fields` selects the mutation classes to run.

// Small-group sweep: every (v, r, t) for n = 1, then `sessions_per_n`
// random sessions for n = 2 and n = 3, each hit with every mutation from
// exhaustive_mutations().
template <PrimeOrderGroup G>
SoundnessTally exhaustive_soundness(const GroupParams<G>& params,
                                    std::span<const TamperField> fields,
                                    std::size_t sessions_per_n, RandomSource& rng) {
  const auto q = static_cast<std::uint32_t>(G::order());
  const MeterKeypair keys = MeterKeypair::generate("tamper-meter", rng);
  SoundnessTally tally;
  auto selected = [&](TamperField f) {
    return std::find(fields.begin(), fields.end(), f) != fields.end();
  };
  auto sweep = [&](const HonestSession<G>& session) {
    for (const Mutation& m : exhaustive_mutations(session)) {
      if (!selected(m.field)) continue;
      record_outcome(tally, params, session, apply_mutation(params, session, m));
    }
  };

  for (std::uint32_t v = 0; v < q; ++v) {
    for (std::uint32_t r = 0; r < q; ++r) {
      for (std::uint32_t t = 0; t < q; ++t) {
        const IntervalIndex i0 = rng.uniform(1u << 20);
        const typename G::Scalar blinding[] = {G::scalar(std::uint64_t{r})};
        HonestSession<G> s;
        s.meter_key = keys.public_key();
        s.profile = {i0, {v}};
        s.tariff = {i0, {t}};
        s.meter_report = build_report(params, keys, s.profile,
                                      std::span<const typename G::Scalar>(blinding));
        s.billing = transform_report(params, s.meter_report, s.tariff, false).report;
        sweep(s);
      }
    }
  }
  for (std::size_t n = 2; n <= 3; ++n) {
    for (std::size_t i = 0; i < sessions_per_n; ++i) {
      const IntervalIndex i0 = rng.uniform(1u << 20);
      ConsumptionProfile profile{i0, {}};
      Tariff tariff{i0, {}};
      for (std::size_t k = 0; k < n; ++k) {
        profile.values.push_back(static_cast<std::uint32_t>(rng.uniform(41)));
        tariff.rates.push_back(static_cast<std::uint32_t>(rng.uniform(21)));
      }
      sweep(run_honest_session(params, keys, std::move(profile), std::move(tariff), rng));
    }
  }
  return tally;
}

// Production-group sample: random sessions with n in [1, max_n], each hit
// with random mutations cycling through the selected fields. Every tenth
// session also gets the price + q shift, which only the 2^64 bound stops.
template <PrimeOrderGroup G>
SoundnessTally sampled_soundness(const GroupParams<G>& params,
                                 std::span<const TamperField> fields, std::size_t mutations,
                                 std::size_t per_session, std::size_t max_n, RandomSource& rng) {
  SoundnessTally tally;
  if (fields.empty() || mutations == 0) return tally;
  const MeterKeypair keys = MeterKeypair::generate("tamper-meter", rng);
  const bool price_selected =
      std::find(fields.begin(), fields.end(), TamperField::kPrice) != fields.end();
  std::size_t done = 0;
  std::size_t cursor = 0;
  for (std::size_t session_no = 0; done < mutations; ++session_no) {
    const std::size_t n = 1 + rng.uniform(max_n);
    const IntervalIndex i0 = rng.next_u64() >> 8;
    ConsumptionProfile profile{i0, {}};
    Tariff tariff{i0, {}};
    for (std::size_t k = 0; k < n; ++k) {
      profile.values.push_back(static_cast<std::uint32_t>(rng.uniform(5001)));
      tariff.rates.push_back(static_cast<std::uint32_t>(rng.uniform(101)));
    }
    auto session = run_honest_session(params, keys, std::move(profile), std::move(tariff), rng);
    for (std::size_t j = 0; j < per_session && done < mutations; ++j, ++done) {
      if (price_selected && j == 0 && session_no % 10 == 0) {
        record_outcome(tally, params, session,
                       apply_mutation(params, session, Mutation{TamperField::kPrice, 0, G::order()}));
        continue;
      }
      const TamperField f = fields[cursor++ % fields.size()];
      record_outcome(tally, params, session, mutate_session(params, session, f, rng));
    }
  }
  return tally;
}

// ---------------------------------------------------------------------------
// Statistics

struct ChiSquaredResult {
  double statistic = 0;
  double dof = 0;
  double p_value = 1;
  std::size_t cells = 0;
};

// Two-sample chi-squared homogeneity test over categorical counts. Cells
// empty in both samples are dropped.
inline ChiSquaredResult chi_squared_homogeneity(const std::map<std::uint64_t, std::uint64_t>& a,
                                                const std::map<std::uint64_t, std::uint64_t>& b) {
  std::map<std::uint64_t, std::pair<double, double>> cells;
  double na = 0;
  double nb = 0;
  for (auto [k, c] : a) {
    cells[k].first += static_cast<double>(c);
    na += static_cast<double>(c);
  }
  for (auto [k, c] : b) {
    cells[k].second += static_cast<double>(c);
    nb += static_cast<double>(c);
  }
  ChiSquaredResult out;
  out.cells = cells.size();
  if (na == 0 || nb == 0 || cells.size() < 2) return out;
  const double total = na + nb;
  for (const auto& [k, c] : cells) {
    const double row = c.first + c.second;
    const double ea = row * na / total;
    const double eb = row * nb / total;
    out.statistic += (c.first - ea) * (c.first - ea) / ea + (c.second - eb) * (c.second - eb) / eb;
  }
  out.dof = static_cast<double>(cells.size() - 1);
  boost::math::chi_squared_distribution<double> dist(out.dof);
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
  return out;
}

// Goodness of fit of observed counts against a uniform distribution over
// `categories` cells.
inline ChiSquaredResult chi_squared_uniform(const std::vector<std::uint64_t>& counts) {
  ChiSquaredResult out;
  out.cells = counts.size();
  if (counts.size() < 2) return out;
  double n = 0;
  for (auto c : counts) n += static_cast<double>(c);
  const double e = n / static_cast<double>(counts.size());
  for (auto c : counts) out.statistic += (static_cast<double>(c) - e) * (static_cast<double>(c) - e) / e;
  out.dof = static_cast<double>(counts.size() - 1);
  boost::math::chi_squared_distribution<double> dist(out.dof);
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
  return out;
}

inline double total_variation_distance(const std::map<std::uint64_t, std::uint64_t>& a,
                                       const std::map<std::uint64_t, std::uint64_t>& b) {
  double na = 0;
  double nb = 0;
  for (auto [k, c] : a) na += static_cast<double>(c);
  for (auto [k, c] : b) nb += static_cast<double>(c);
  if (na == 0 || nb == 0) return 1.0;
  std::map<std::uint64_t, std::pair<double, double>> cells;
  for (auto [k, c] : a) cells[k].first = static_cast<double>(c) / na;
  for (auto [k, c] : b) cells[k].second = static_cast<double>(c) / nb;
  double d = 0;
  for (const auto& [k, p] : cells) d += std::abs(p.first - p.second);
  return d / 2;
}

// Packs (COMM, r') of a small-group view into one categorical cell id.
template <PrimeOrderGroup G>
std::uint64_t view_cell(std::span<const Commitment<G>> comm, const typename G::Scalar& r_prime) {
  static_assert(G::kElementBytes <= 2, "view cells are only meaningful for tiny groups");
  std::uint64_t cell = 0;
  for (const auto& c : comm) {
    for (std::uint8_t b : G::encode(c.c)) cell = cell * 256 + b;
  }
  for (std::uint8_t b : G::encode_scalar(r_prime)) cell = cell * 256 + b;
  return cell;
}

// All profiles of length n with entries in [0, max_value] whose price under
// the tariff is exactly `price`.
inline std::vector<std::vector<std::uint32_t>> profiles_with_price(const Tariff& tariff,
                                                                    const BigInt& price,
                                                                    std::uint32_t max_value) {
  std::vector<std::vector<std::uint32_t>> out;
  std::vector<std::uint32_t> cur(tariff.size(), 0);
  auto rec = [&](auto& self, std::size_t k, BigInt remaining) -> void {
    if (k == tariff.size()) {
      if (remaining == 0) out.push_back(cur);
      return;
    }
    for (std::uint32_t v = 0; v <= max_value; ++v) {
      BigInt cost = BigInt(tariff.rates[k]) * v;
      if (cost > remaining) break;
      cur[k] = v;
      self(self, k + 1, remaining - cost);
    }
    cur[k] = 0;
  };
  rec(rec, 0, price);
  return out;
}

}  // namespace pbill::analysis
