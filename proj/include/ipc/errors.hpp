#pragma once

#include <stdexcept>
#include <string>

namespace ipc {

/// Raised when a caller breaks an operation's precondition (shape, range, dims).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when training diverges (non-finite loss) or a file cannot be processed.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace ipc
