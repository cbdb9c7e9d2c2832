// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace smellwatch {

enum class ErrorCode {
  parse,          // malformed document or wire body
  validation,     // well-formed input violating a domain invariant
  argument,       // bad call arguments (inverted ranges, mixed inputs)
  not_found,
  conflict,
  configuration,  // detector/catalog/config mismatch
  store,          // storage unavailable; retryable
  startup,
  unreachable,    // remote endpoint did not answer
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  bool retryable() const noexcept { return code_ == ErrorCode::store; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace smellwatch
