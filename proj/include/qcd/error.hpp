#pragma once

#include <stdexcept>
#include <string>

namespace qcd {

/// Raised when an argument violates an operation's precondition
/// (dimension mismatch, non-finite increment, empty window, ...).
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised when an object is used out of protocol, e.g. stepping a stopped procedure.
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace qcd
