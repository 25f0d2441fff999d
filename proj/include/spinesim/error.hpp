#pragma once

#include <stdexcept>
#include <string>

namespace spinesim {

/// Contract violations map to CLI exit code 1, I/O failures to exit code 2.
enum class ErrorKind { Contract, Io };

/// Single exception type used across the library. `code` is a short
/// machine-readable identifier (e.g. "size_mismatch", "unknown_label").
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

[[noreturn]] inline void contract_error(const std::string& code, const std::string& message) {
  throw Error(ErrorKind::Contract, code, message);
}

[[noreturn]] inline void io_error(const std::string& code, const std::string& message) {
  throw Error(ErrorKind::Io, code, message);
}

}  // namespace spinesim
