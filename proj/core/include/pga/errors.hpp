#pragma once

#include <stdexcept>
#include <string>

namespace pga {

// Bad user-facing configuration: unknown keys, invalid values, missing heads.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/contract violations between tensors or networks.
struct DimensionError : std::invalid_argument {
  explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numeric-domain failures (log of NaN, non-finite loss totals).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or truncated binary/text files. Carries the byte offset at
// which parsing failed, when known.
struct FormatError : std::runtime_error {
  FormatError(const std::string& msg, long long offset = -1)
      : std::runtime_error(offset >= 0 ? msg + " (byte offset " + std::to_string(offset) + ")"
                                       : msg),
        byte_offset(offset) {}
  long long byte_offset;
};

}  // namespace pga
