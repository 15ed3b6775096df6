#pragma once

#include <stdexcept>
#include <string>

namespace ecgreid {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or missing input (files, manifests). CLI exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; carries the 1-based line number.
class ParseError : public InputError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : InputError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Data that parses but violates a domain invariant (age range, NaN samples).
class ValidationError : public InputError {
 public:
  using InputError::InputError;
};

/// Invalid parameters (cutoff above Nyquist, bad grid, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Artifacts that do not agree with each other (feature names, class labels).
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Training cannot proceed (single class, empty split).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace ecgreid
