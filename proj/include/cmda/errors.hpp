#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cmda {

enum class ErrorCode {
  invalid_argument,
  validation_failed,
  not_found,
  conflict,
  gone,
  precondition_failed,
  parse_error,         // retryable: malformed model output
  contract_violation,  // retryable: well-formed output breaking the response contract
  transient,           // retryable: timeout / transport failure
  upstream_rejected,   // provider 4xx
  script_exhausted,    // mock provider ran out of scripted replies
  ledger_corruption,
  internal,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library. `details` carries one line per
// violated rule when several checks fail at once.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string field = {},
        std::vector<std::string> details = {})
      : std::runtime_error(std::move(message)),
        code_(code),
        field_(std::move(field)),
        details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }
  const std::vector<std::string>& details() const noexcept { return details_; }

  bool retryable() const noexcept {
    return code_ == ErrorCode::parse_error || code_ == ErrorCode::contract_violation ||
           code_ == ErrorCode::transient;
  }

 private:
  ErrorCode code_;
  std::string field_;
  std::vector<std::string> details_;
};

}  // namespace cmda
