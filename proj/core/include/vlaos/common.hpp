#pragma once

#include <stdexcept>
#include <string>

namespace vlaos {

// Bad user input: unknown task ids, invalid paradigm/representation combos,
// malformed config. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failures while running: missing files, bad checksums, expert failures.
// CLI maps this to exit code 3.
struct RuntimeFailure : std::runtime_error {
  explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite losses or activations. CLI maps this to exit code 4.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vlaos
