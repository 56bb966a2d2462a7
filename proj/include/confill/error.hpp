#pragma once

#include <stdexcept>
#include <string>

namespace confill {

/// Base for every failure raised by the core library. The C API maps each
/// subclass onto a status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid tunable or unknown enumerator (bad kind name, out-of-range knob).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation's precondition (shape mismatch, bad t).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed PGM / checkpoint / feature file bytes.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  explicit ParseError(const std::string& what) : Error(what) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_ = 0;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss during training or a refinement step that could not be
/// recovered by halving the step size.
class NumericError : public Error {
 public:
  using Error::Error;
};

#define CONFILL_REQUIRE(cond, msg)                  \
  do {                                              \
    if (!(cond)) throw ::confill::ContractError(msg); \
  } while (0)

}  // namespace confill
