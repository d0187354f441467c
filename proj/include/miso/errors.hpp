#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace miso {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: bad configuration, violated preconditions, malformed
/// data. The CLI maps these to exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Parse failure tied to a line of an input file (1-based).
class ParseError : public ConfigError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : ConfigError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A computation that could not reach its goal (iteration caps, non-finite
/// values, violated theory preconditions). The CLI maps these to exit code 2.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Raised when an exact enumeration would exceed the configured cap.
class SupportTooLarge : public Error {
 public:
  using Error::Error;
};

}  // namespace miso
