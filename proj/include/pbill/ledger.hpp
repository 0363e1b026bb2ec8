#pragma once

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pbill/bytes.hpp"
#include "pbill/error.hpp"
#include "pbill/fd.hpp"

namespace pbill {

// One verdict as retained by the back-end. Everything here is data the
// back-end received from the privacy component; there is deliberately no
// field for consumption values or per-interval blinding values.
struct LedgerRecord {
  std::uint64_t seq = 0;
  std::string meter_id;
  std::uint64_t i0 = 0;
  std::uint64_t n = 0;
  BigInt price = 0;
  std::string r_prime;                   // hex, canonical scalar encoding
  std::vector<std::string> commitments;  // hex, canonical element encodings
  std::string comm_digest;               // hex SHA-256 over the concatenated encodings
  std::string signature;                 // hex
  bool accepted = false;
  std::string reason;
  std::string mode;  // "privacy" or "pass-through"
  std::string timestamp;
  bool duplicate = false;

  bool operator==(const LedgerRecord&) const = default;
};

// Serialized field names, in order. The schema check in the test suite
// reads this list.
inline constexpr std::array<std::string_view, 14> kLedgerFields = {
    "seq",       "meter_id", "i0",       "n",    "price",     "r_prime",   "commitments",
    "comm_digest", "signature", "accepted", "reason", "mode", "timestamp", "duplicate"};

inline nlohmann::ordered_json to_json(const LedgerRecord& r) {
  nlohmann::ordered_json j;
  j["seq"] = r.seq;
  j["meter_id"] = r.meter_id;
  j["i0"] = r.i0;
  j["n"] = r.n;
  j["price"] = r.price.str();
  j["r_prime"] = r.r_prime;
  j["commitments"] = r.commitments;
  j["comm_digest"] = r.comm_digest;
  j["signature"] = r.signature;
  j["accepted"] = r.accepted;
  j["reason"] = r.reason;
  j["mode"] = r.mode;
  j["timestamp"] = r.timestamp;
  j["duplicate"] = r.duplicate;
  return j;
}

inline LedgerRecord ledger_record_from_json(const nlohmann::json& j) {
  try {
    LedgerRecord r;
    r.seq = j.at("seq").get<std::uint64_t>();
    r.meter_id = j.at("meter_id").get<std::string>();
    r.i0 = j.at("i0").get<std::uint64_t>();
    r.n = j.at("n").get<std::uint64_t>();
    r.price = parse_bigint(j.at("price").get<std::string>());
    r.r_prime = j.at("r_prime").get<std::string>();
    r.commitments = j.at("commitments").get<std::vector<std::string>>();
    r.comm_digest = j.at("comm_digest").get<std::string>();
    r.signature = j.at("signature").get<std::string>();
    r.accepted = j.at("accepted").get<bool>();
    r.reason = j.at("reason").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.timestamp = j.at("timestamp").get<std::string>();
    r.duplicate = j.at("duplicate").get<bool>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("ledger record: ") + e.what());
  }
}

inline std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Append-only verdict log. With a path it is persisted as one JSON object
// per line and fsync'ed after every append; without one it lives in memory.
// Appends are serialised; this is the back-end's single serialisation point.
class BillingLedger {
 public:
  BillingLedger() = default;

  explicit BillingLedger(std::string path) : path_(std::move(path)) {
    {
      std::ifstream in(path_);
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
          remember(ledger_record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
          throw Error(ErrorCode::kIo, path_ + ":" + std::to_string(line_no) + ": " + e.what());
        }
      }
    }
    fd_ = FileDescriptor(::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644));
    if (!fd_.valid()) {
      throw Error(ErrorCode::kIo, "cannot open ledger " + path_ + ": " + std::strerror(errno));
    }
  }

  BillingLedger(const BillingLedger&) = delete;
  BillingLedger& operator=(const BillingLedger&) = delete;

  // Assigns seq and flags repeats of (meter_id, i0); returns the stored record.
  LedgerRecord append(LedgerRecord record) {
    std::lock_guard lock(mu_);
    record.seq = records_.size() + 1;
    record.duplicate = seen_.contains({record.meter_id, record.i0});
    if (record.timestamp.empty()) record.timestamp = utc_timestamp();
    if (fd_.valid()) {
      std::string line = to_json(record).dump() + "\n";
      const char* p = line.data();
      std::size_t left = line.size();
      while (left > 0) {
        ssize_t w = ::write(fd_.get(), p, left);
        if (w < 0) {
          if (errno == EINTR) continue;
          throw Error(ErrorCode::kIo, "ledger write failed: " + std::string(std::strerror(errno)));
        }
        p += w;
        left -= static_cast<std::size_t>(w);
      }
      if (::fsync(fd_.get()) != 0) {
        throw Error(ErrorCode::kIo, "ledger fsync failed: " + std::string(std::strerror(errno)));
      }
    }
    remember(record);
    return record;
  }

  std::vector<LedgerRecord> records() const {
    std::lock_guard lock(mu_);
    return records_;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return records_.size();
  }

 private:
  void remember(const LedgerRecord& r) {
    records_.push_back(r);
    seen_.insert({r.meter_id, r.i0});
  }

  std::string path_;
  FileDescriptor fd_;
  mutable std::mutex mu_;
  std::vector<LedgerRecord> records_;
  std::set<std::pair<std::string, std::uint64_t>> seen_;
};

}  // namespace pbill
