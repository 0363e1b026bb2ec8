#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pbill {

enum class ErrorCode {
  kInvalidArgument,
  kUnknownGroup,
  kDecode,
  kMisaligned,
  kUnknownTariff,
  kTariffImmutable,
  kNetwork,
  kProtocol,
  kConfig,
  kIo,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kUnknownGroup: return "unknown_group";
    case ErrorCode::kDecode: return "decode";
    case ErrorCode::kMisaligned: return "misaligned";
    case ErrorCode::kUnknownTariff: return "unknown_tariff";
    case ErrorCode::kTariffImmutable: return "tariff_immutable";
    case ErrorCode::kNetwork: return "network";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Network failures are the only class a caller should retry.
  bool retriable() const noexcept { return code_ == ErrorCode::kNetwork; }

 private:
  ErrorCode code_;
};

class DecodeError : public Error {
 public:
  explicit DecodeError(const std::string& what)
      : Error(ErrorCode::kDecode, what) {}
};

}  // namespace pbill
