#pragma once

#include <stdexcept>
#include <string>

namespace boostnet {

// Bad user input: malformed config files, invalid shapes, infeasible budgets.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or failed numerical procedures.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace boostnet
