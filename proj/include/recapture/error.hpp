#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace recapture {

/// Failure categories. Each maps onto one HTTP status class in the service
/// and onto a stable token in CLI error lines.
enum class ErrorKind {
  kInvalidArgument,  // malformed call, bad flag, shape mismatch
  kUnprocessable,    // well-formed but semantically invalid input (bad layout)
  kNotFound,
  kConflict,         // illegal state transition
  kUnavailable,      // no model loaded
  kIo,
  kNonFinite,        // training diverged
};

std::string_view to_string(ErrorKind kind);
int http_status(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorKind::kInvalidArgument, message);
}

}  // namespace recapture
