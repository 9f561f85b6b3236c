#pragma once

#include <stdexcept>
#include <string>

namespace difflab {

// Caller broke a documented precondition (shape mismatch, index out of
// range, non-scalar loss, ...). These are bugs, not recoverable states.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Bad user-supplied configuration (out-of-range hyperparameter, malformed
// spec). Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A numerical process produced a non-finite state. Maps to CLI exit code 3.
class DivergedError : public std::runtime_error {
 public:
  explicit DivergedError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem / parse failures. Maps to CLI exit code 4.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

}  // namespace difflab
