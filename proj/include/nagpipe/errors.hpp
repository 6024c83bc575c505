#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nagpipe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class InvalidRangeError : public Error {
 public:
  using Error::Error;
};

// Raised when a value that must be finite is not. Runners convert this into a
// divergence outcome on the trace instead of letting it escape.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Errors from reading a config document. `line` is 1-based, 0 when the error is
// not tied to a line (e.g. cross-key validation).
class ConfigError : public Error {
 public:
  ConfigError(const std::string& msg, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

}  // namespace nagpipe
