#pragma once

#include <stdexcept>
#include <string>

namespace semhpo {

/// Base class for every error raised by the library. The CLI maps these to
/// exit status 1.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line number when known.
class ParseError : public Error {
public:
  ParseError(const std::string& msg, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  explicit ParseError(const std::string& msg) : Error(msg), line_(0) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

/// Structural problem in the term graph (dangling parent, cycle).
class OntologyError : public Error {
public:
  using Error::Error;
};

/// Tensor shape or id range violation at a model boundary.
class InputError : public Error {
public:
  using Error::Error;
};

class DataError : public Error {
public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
  using Error::Error;
};

}  // namespace semhpo
