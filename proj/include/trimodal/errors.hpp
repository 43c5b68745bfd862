#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace trimodal {

// Exit-code mapping used by the CLI: ConfigError -> 1, FormatError -> 2,
// everything numeric/contract -> 3.

// Invalid configuration value or unknown key.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or corrupted on-disk data (datasets, checkpoints).
struct FormatError : std::runtime_error {
  enum class Kind { BadMagic, BadVersion, Truncated, BadSection, InvalidData, Io };
  Kind kind;
  std::string section;

  FormatError(Kind k, const std::string& msg, std::string sec = {})
      : std::runtime_error(msg), kind(k), section(std::move(sec)) {}
};

// Shape mismatch at graph construction or binding time.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse (non-scalar backward target, empty set, ...).
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input outside a primitive's documented domain (log of <= 0, softmax of inf).
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value produced during evaluation or training.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace trimodal
