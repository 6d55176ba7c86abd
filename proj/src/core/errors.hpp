#pragma once

#include <stdexcept>
#include <string>

namespace modec {

enum class ErrorCode {
  ShapeMismatch,
  NonFinite,
  NonSymmetric,
  NotPsd,
  RankTooSmall,
  OddRankWithPairing,
  PairViolation,
  BadTarget,
  EpsilonTooSmall,
  TooLarge,
  NonConvergence,
  BadConfig,
  IoError,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NonSymmetric: return "NonSymmetric";
    case ErrorCode::NotPsd: return "NotPsd";
    case ErrorCode::RankTooSmall: return "RankTooSmall";
    case ErrorCode::OddRankWithPairing: return "OddRankWithPairing";
    case ErrorCode::PairViolation: return "PairViolation";
    case ErrorCode::BadTarget: return "BadTarget";
    case ErrorCode::EpsilonTooSmall: return "EpsilonTooSmall";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace modec
