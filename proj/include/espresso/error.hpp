#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace espresso {

enum class ErrorCode {
  io,
  parse,
  integrity,
  dimension,
  invalid_argument,
  empty_text,
  unencodable_query,
  unknown_piece,
  non_finite,
  unsupported_encoding,
  truncated,
  clip_too_short,
  missing_audio,
  fingerprint_mismatch,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return "io_error";
    case ErrorCode::parse: return "parse_error";
    case ErrorCode::integrity: return "integrity_error";
    case ErrorCode::dimension: return "dimension_error";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::empty_text: return "empty_text";
    case ErrorCode::unencodable_query: return "unencodable_query";
    case ErrorCode::unknown_piece: return "unknown_piece";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::unsupported_encoding: return "unsupported_encoding";
    case ErrorCode::truncated: return "truncated_file";
    case ErrorCode::clip_too_short: return "clip_too_short";
    case ErrorCode::missing_audio: return "missing_audio";
    case ErrorCode::fingerprint_mismatch: return "fingerprint_mismatch";
  }
  return "error";
}

// Every failure raised by the library. `details` carries machine-readable
// context such as the OOV tokens of an unencodable query.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::vector<std::string> details = {})
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  std::vector<std::string> details_;
};

}  // namespace espresso
