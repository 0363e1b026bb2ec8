#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pbill/backend.hpp"
#include "pbill/bytes.hpp"
#include "pbill/group/params.hpp"
#include "pbill/metering.hpp"
#include "pbill/privacy.hpp"

// Byte layout is documented in docs/wire-format.md; the golden frames under
// tests/golden pin it.
namespace pbill::wire {

inline constexpr std::uint8_t kMagic0 = 0x50;  // 'P'
inline constexpr std::uint8_t kMagic1 = 0x42;  // 'B'
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 8;
inline constexpr std::uint32_t kMaxPayload = 16u << 20;
inline constexpr std::uint32_t kMaxRows = 1u << 16;
inline constexpr std::size_t kMaxPriceBytes = 64;

enum class MessageKind : std::uint8_t {
  kReportTable = 0x01,
  kTariffRequest = 0x02,
  kTariff = 0x03,
  kVerdict = 0x04,
  kAck = 0x05,
  kError = 0x06,
};

// Column bits of a report table.
namespace column {
inline constexpr std::uint8_t kInterval = 0x01;    // i
inline constexpr std::uint8_t kValue = 0x02;       // v_i
inline constexpr std::uint8_t kCommitment = 0x04;  // Comm_i
inline constexpr std::uint8_t kRandomness = 0x08;  // r_i
inline constexpr std::uint8_t kSummary = 0x10;     // P(V,T), r'
inline constexpr std::uint8_t kAll = 0x1f;
}  // namespace column

inline constexpr std::uint8_t kMeterColumns =
    column::kInterval | column::kValue | column::kCommitment | column::kRandomness;
inline constexpr std::uint8_t kPrivacyColumns =
    column::kInterval | column::kCommitment | column::kSummary;

inline std::string column_name(std::uint8_t bit) {
  switch (bit) {
    case column::kInterval: return "i";
    case column::kValue: return "v";
    case column::kCommitment: return "comm";
    case column::kRandomness: return "r";
    case column::kSummary: return "summary";
  }
  return "0x" + to_hex(ByteView(&bit, 1));
}

enum class ReportMode { kMeter, kPrivacy };

// Receivers switch on the declared column set: the full table comes from a
// meter, a table without v and r from a privacy component.
inline ReportMode detect_mode(std::uint8_t columns) {
  if (columns == kMeterColumns) return ReportMode::kMeter;
  if (columns == kPrivacyColumns) return ReportMode::kPrivacy;
  if ((columns & column::kCommitment) == 0) {
    throw DecodeError("ambiguous column set: commitment column is mandatory");
  }
  throw DecodeError("ambiguous column set 0x" + to_hex(ByteView(&columns, 1)));
}

// Meter form: columns {i, v, comm, r}.
struct MeterTable {
  std::string group_id;
  std::string meter_id;
  std::uint64_t i0 = 0;
  std::vector<std::uint32_t> values;
  std::vector<Bytes> commitments;
  std::vector<Bytes> randomness;
  Bytes signature;
  bool operator==(const MeterTable&) const = default;
};

// Privacy form: columns {i, comm} plus the summary (price, r'). The type has
// no place to put v or r.
struct PrivacyTable {
  std::string group_id;
  std::string meter_id;
  std::uint64_t i0 = 0;
  std::vector<Bytes> commitments;
  BigInt price = 0;
  Bytes r_prime;
  Bytes signature;
  bool operator==(const PrivacyTable&) const = default;
};

struct TariffRequest {
  std::string meter_id;
  std::uint64_t i0 = 0;
  std::uint32_t n = 0;
  bool operator==(const TariffRequest&) const = default;
};

struct TariffMessage {
  std::string meter_id;
  Tariff tariff;
  bool operator==(const TariffMessage&) const = default;
};

struct VerdictMessage {
  std::string meter_id;
  std::uint64_t i0 = 0;
  bool accepted = false;
  std::string reason;
  std::string detail;
  bool operator==(const VerdictMessage&) const = default;
};

struct AckMessage {
  std::string meter_id;
  std::uint64_t i0 = 0;
  std::string status;
  bool operator==(const AckMessage&) const = default;
};

struct ErrorMessage {
  std::string code;
  std::string message;
  bool operator==(const ErrorMessage&) const = default;
};

using Message = std::variant<MeterTable, PrivacyTable, TariffRequest, TariffMessage,
                             VerdictMessage, AckMessage, ErrorMessage>;

// The byte region the meter signed, rebuilt from either table form.
inline Bytes signed_region(const MeterTable& t) { return signing_payload(t.i0, t.commitments); }
inline Bytes signed_region(const PrivacyTable& t) { return signing_payload(t.i0, t.commitments); }

namespace detail {

inline GroupInfo require_group(std::string_view id) {
  auto info = find_group(id);
  if (!info) throw DecodeError("unknown group id '" + std::string(id) + "'");
  return *info;
}

inline void put_block(ByteWriter& w, std::uint8_t tag, const Bytes& body) {
  w.u8(tag);
  w.u32(static_cast<std::uint32_t>(body.size()));
  w.raw(body);
}

inline void put_fixed_column(ByteWriter& w, std::uint8_t tag, const std::vector<Bytes>& cells,
                             std::size_t width, std::size_t n) {
  if (cells.size() != n) {
    throw Error(ErrorCode::kInvalidArgument, "column " + column_name(tag) + " has wrong length");
  }
  ByteWriter body;
  for (const Bytes& c : cells) {
    if (c.size() != width) {
      throw Error(ErrorCode::kInvalidArgument, "column " + column_name(tag) + " cell width");
    }
    body.raw(c);
  }
  put_block(w, tag, body.bytes());
}

inline Bytes interval_column(std::uint64_t i0, std::size_t n) {
  ByteWriter body;
  for (std::size_t k = 0; k < n; ++k) body.u64(i0 + k);
  return body.take();
}

inline void put_table_header(ByteWriter& w, std::string_view group_id, std::string_view meter_id,
                             std::uint64_t i0, std::size_t n, std::uint8_t columns,
                             std::uint8_t blocks) {
  if (n == 0 || n > kMaxRows) throw Error(ErrorCode::kInvalidArgument, "row count out of range");
  w.str8(group_id);
  w.str16(meter_id);
  w.u64(i0);
  w.u32(static_cast<std::uint32_t>(n));
  w.u8(columns);
  w.u8(blocks);
}

inline Bytes frame(MessageKind kind, const Bytes& payload) {
  if (payload.size() > kMaxPayload) throw Error(ErrorCode::kInvalidArgument, "payload too large");
  ByteWriter w;
  w.u8(kMagic0);
  w.u8(kMagic1);
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.raw(payload);
  return w.take();
}

inline Bytes encode_payload(const MeterTable& t) {
  auto info = require_group(t.group_id);
  const std::size_t n = t.values.size();
  ByteWriter w;
  put_table_header(w, t.group_id, t.meter_id, t.i0, n, kMeterColumns, 4);
  put_block(w, column::kInterval, interval_column(t.i0, n));
  ByteWriter values;
  for (std::uint32_t v : t.values) values.u32(v);
  put_block(w, column::kValue, values.bytes());
  put_fixed_column(w, column::kCommitment, t.commitments, info.element_bytes, n);
  put_fixed_column(w, column::kRandomness, t.randomness, info.scalar_bytes, n);
  w.blob16(t.signature);
  return w.take();
}

inline Bytes encode_payload(const PrivacyTable& t) {
  auto info = require_group(t.group_id);
  const std::size_t n = t.commitments.size();
  ByteWriter w;
  put_table_header(w, t.group_id, t.meter_id, t.i0, n, kPrivacyColumns, 3);
  put_block(w, column::kInterval, interval_column(t.i0, n));
  put_fixed_column(w, column::kCommitment, t.commitments, info.element_bytes, n);
  ByteWriter summary;
  Bytes price = bigint_to_bytes(t.price);
  if (price.size() > kMaxPriceBytes) throw Error(ErrorCode::kInvalidArgument, "price too large");
  summary.blob16(price);
  if (t.r_prime.size() != info.scalar_bytes) {
    throw Error(ErrorCode::kInvalidArgument, "r' has wrong width");
  }
  summary.raw(t.r_prime);
  put_block(w, column::kSummary, summary.bytes());
  w.blob16(t.signature);
  return w.take();
}

inline Bytes encode_payload(const TariffRequest& m) {
  ByteWriter w;
  w.str16(m.meter_id);
  w.u64(m.i0);
  w.u32(m.n);
  return w.take();
}

inline Bytes encode_payload(const TariffMessage& m) {
  if (m.tariff.rates.size() > kMaxRows) {
    throw Error(ErrorCode::kInvalidArgument, "tariff too long");
  }
  ByteWriter w;
  w.str16(m.meter_id);
  w.u64(m.tariff.i0);
  w.u32(static_cast<std::uint32_t>(m.tariff.rates.size()));
  for (std::uint32_t t : m.tariff.rates) w.u32(t);
  return w.take();
}

inline Bytes encode_payload(const VerdictMessage& m) {
  ByteWriter w;
  w.str16(m.meter_id);
  w.u64(m.i0);
  w.u8(m.accepted ? 1 : 0);
  w.str8(m.reason);
  w.str16(m.detail);
  return w.take();
}

inline Bytes encode_payload(const AckMessage& m) {
  ByteWriter w;
  w.str16(m.meter_id);
  w.u64(m.i0);
  w.str8(m.status);
  return w.take();
}

inline Bytes encode_payload(const ErrorMessage& m) {
  ByteWriter w;
  w.str8(m.code);
  w.str16(m.message);
  return w.take();
}

template <class T>
constexpr MessageKind kind_of() {
  if constexpr (std::is_same_v<T, MeterTable> || std::is_same_v<T, PrivacyTable>) {
    return MessageKind::kReportTable;
  } else if constexpr (std::is_same_v<T, TariffRequest>) {
    return MessageKind::kTariffRequest;
  } else if constexpr (std::is_same_v<T, TariffMessage>) {
    return MessageKind::kTariff;
  } else if constexpr (std::is_same_v<T, VerdictMessage>) {
    return MessageKind::kVerdict;
  } else if constexpr (std::is_same_v<T, AckMessage>) {
    return MessageKind::kAck;
  } else {
    return MessageKind::kError;
  }
}

inline std::vector<Bytes> split_cells(ByteView body, std::size_t width, std::size_t n) {
  std::vector<Bytes> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    auto cell = body.subspan(k * width, width);
    out.emplace_back(cell.begin(), cell.end());
  }
  return out;
}

inline Message decode_report_table(ByteReader& r) {
  std::string group_id = r.str8();
  const GroupInfo info = require_group(group_id);
  std::string meter_id = r.str16();
  const std::uint64_t i0 = r.u64();
  const std::uint32_t n = r.u32();
  if (n == 0 || n > kMaxRows) throw DecodeError("row count out of range");
  if (n - 1 > UINT64_MAX - i0) throw DecodeError("interval range overflows");
  const std::uint8_t columns = r.u8();
  if ((columns & ~column::kAll) != 0) throw DecodeError("unknown column bits");
  const std::uint8_t block_count = r.u8();

  std::uint8_t seen = 0;
  std::uint8_t last_tag = 0;
  std::vector<std::uint32_t> values;
  std::vector<Bytes> commitments;
  std::vector<Bytes> randomness;
  BigInt price = 0;
  Bytes r_prime;

  for (std::uint8_t b = 0; b < block_count; ++b) {
    const std::uint8_t tag = r.u8();
    const std::uint32_t length = r.u32();
    if (tag == 0 || (tag & (tag - 1)) != 0 || (tag & ~column::kAll) != 0) {
      throw DecodeError("invalid column tag");
    }
    if ((columns & tag) == 0) {
      throw DecodeError("undeclared column " + column_name(tag) + " present");
    }
    if (tag <= last_tag) throw DecodeError("columns out of order or repeated");
    last_tag = tag;
    seen |= tag;
    ByteView body = r.raw(length);

    auto expect_len = [&](std::size_t want) {
      if (body.size() != want) {
        throw DecodeError("column " + column_name(tag) + " has wrong length");
      }
    };
    switch (tag) {
      case column::kInterval: {
        expect_len(std::size_t{n} * 8);
        ByteReader cells(body);
        for (std::uint32_t k = 0; k < n; ++k) {
          if (cells.u64() != i0 + k) throw DecodeError("interval column is not consecutive from i0");
        }
        break;
      }
      case column::kValue: {
        expect_len(std::size_t{n} * 4);
        ByteReader cells(body);
        values.reserve(n);
        for (std::uint32_t k = 0; k < n; ++k) values.push_back(cells.u32());
        break;
      }
      case column::kCommitment:
        expect_len(std::size_t{n} * info.element_bytes);
        commitments = split_cells(body, info.element_bytes, n);
        break;
      case column::kRandomness:
        expect_len(std::size_t{n} * info.scalar_bytes);
        randomness = split_cells(body, info.scalar_bytes, n);
        break;
      case column::kSummary: {
        ByteReader s(body);
        Bytes p = s.blob16();
        if (p.size() > kMaxPriceBytes) throw DecodeError("price too large");
        if (!p.empty() && p[0] == 0) throw DecodeError("non-canonical price encoding");
        price = bigint_from_bytes(p);
        ByteView rp = s.raw(info.scalar_bytes);
        r_prime.assign(rp.begin(), rp.end());
        s.expect_end();
        break;
      }
    }
  }
  if (seen != columns) throw DecodeError("declared column missing");
  const ReportMode mode = detect_mode(columns);
  Bytes signature = r.blob16();
  r.expect_end();

  if (mode == ReportMode::kMeter) {
    return MeterTable{std::move(group_id), std::move(meter_id), i0, std::move(values),
                      std::move(commitments), std::move(randomness), std::move(signature)};
  }
  return PrivacyTable{std::move(group_id), std::move(meter_id), i0, std::move(commitments),
                      std::move(price), std::move(r_prime), std::move(signature)};
}

}  // namespace detail

// Validates the 8-byte frame header and returns the payload length.
inline std::uint32_t payload_length(ByteView header) {
  if (header.size() < kHeaderBytes) throw DecodeError("truncated frame header");
  if (header[0] != kMagic0 || header[1] != kMagic1) throw DecodeError("bad magic");
  if (header[2] != kVersion) {
    throw DecodeError("unsupported version " + std::to_string(header[2]));
  }
  ByteReader r(header.subspan(4, 4));
  std::uint32_t length = r.u32();
  if (length > kMaxPayload) throw DecodeError("payload exceeds maximum frame size");
  return length;
}

inline Bytes encode_message(const Message& msg) {
  return std::visit(
      [](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        return detail::frame(detail::kind_of<T>(), detail::encode_payload(m));
      },
      msg);
}

inline Message decode_message(ByteView frame) {
  const std::uint32_t length = payload_length(frame);
  if (frame.size() < kHeaderBytes + length) throw DecodeError("truncated frame");
  if (frame.size() > kHeaderBytes + length) throw DecodeError("trailing bytes after frame");
  ByteReader r(frame.subspan(kHeaderBytes, length));

  switch (static_cast<MessageKind>(frame[3])) {
    case MessageKind::kReportTable:
      return detail::decode_report_table(r);
    case MessageKind::kTariffRequest: {
      TariffRequest m;
      m.meter_id = r.str16();
      m.i0 = r.u64();
      m.n = r.u32();
      r.expect_end();
      return m;
    }
    case MessageKind::kTariff: {
      TariffMessage m;
      m.meter_id = r.str16();
      m.tariff.i0 = r.u64();
      std::uint32_t n = r.u32();
      if (n > kMaxRows) throw DecodeError("tariff too long");
      if (r.remaining() != std::size_t{n} * 4) throw DecodeError("tariff length mismatch");
      m.tariff.rates.reserve(n);
      for (std::uint32_t k = 0; k < n; ++k) m.tariff.rates.push_back(r.u32());
      r.expect_end();
      return m;
    }
    case MessageKind::kVerdict: {
      VerdictMessage m;
      m.meter_id = r.str16();
      m.i0 = r.u64();
      std::uint8_t flag = r.u8();
      if (flag > 1) throw DecodeError("invalid verdict flag");
      m.accepted = flag == 1;
      m.reason = r.str8();
      m.detail = r.str16();
      r.expect_end();
      return m;
    }
    case MessageKind::kAck: {
      AckMessage m;
      m.meter_id = r.str16();
      m.i0 = r.u64();
      m.status = r.str8();
      r.expect_end();
      return m;
    }
    case MessageKind::kError: {
      ErrorMessage m;
      m.code = r.str8();
      m.message = r.str16();
      r.expect_end();
      return m;
    }
  }
  throw DecodeError("unknown message kind " + std::to_string(frame[3]));
}

// ---------------------------------------------------------------------------
// Typed conversions

template <PrimeOrderGroup G>
MeterTable to_table(const CommitmentReport<G>& report) {
  MeterTable t;
  t.group_id = std::string(G::kId);
  t.meter_id = report.meter_id;
  t.i0 = report.i0;
  for (const auto& row : report.rows) {
    t.values.push_back(row.value);
    t.commitments.push_back(G::encode(row.commitment.c));
    t.randomness.push_back(G::encode_scalar(row.r));
  }
  t.signature = report.signature;
  return t;
}

template <PrimeOrderGroup G>
PrivacyTable to_table(const BillingReport<G>& report) {
  PrivacyTable t;
  t.group_id = std::string(G::kId);
  t.meter_id = report.meter_id;
  t.i0 = report.i0;
  for (const auto& c : report.commitments) t.commitments.push_back(G::encode(c.c));
  t.price = report.price;
  t.r_prime = G::encode_scalar(report.r_prime);
  t.signature = report.signature;
  return t;
}

template <PrimeOrderGroup G>
void require_group_id(std::string_view group_id) {
  if (group_id != G::kId) {
    throw Error(ErrorCode::kProtocol, "group mismatch: message uses '" + std::string(group_id) +
                                          "', expected '" + std::string(G::kId) + "'");
  }
}

template <PrimeOrderGroup G>
CommitmentReport<G> commitment_report_from(const MeterTable& t) {
  require_group_id<G>(t.group_id);
  CommitmentReport<G> report;
  report.meter_id = t.meter_id;
  report.i0 = t.i0;
  for (std::size_t k = 0; k < t.values.size(); ++k) {
    report.rows.push_back({t.i0 + k, t.values[k], Commitment<G>{G::decode(t.commitments[k])},
                           G::decode_scalar(t.randomness[k])});
  }
  report.signature = t.signature;
  return report;
}

template <PrimeOrderGroup G>
BillingReport<G> billing_report_from(const PrivacyTable& t) {
  require_group_id<G>(t.group_id);
  BillingReport<G> report;
  report.meter_id = t.meter_id;
  report.i0 = t.i0;
  report.price = t.price;
  report.r_prime = G::decode_scalar(t.r_prime);
  for (const Bytes& c : t.commitments) report.commitments.push_back({G::decode(c)});
  report.signature = t.signature;
  return report;
}

}  // namespace pbill::wire
