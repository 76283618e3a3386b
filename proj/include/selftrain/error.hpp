#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace selftrain {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed bracketed input. Line and column are 1-based.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& what, std::size_t line, std::size_t column)
      : Error("syntax error at line " + std::to_string(line) + ", column " +
              std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// Well-formed input that violates a tree or data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Tree shape that a transformation cannot handle (e.g. stray binarization nodes).
class StructureError : public Error {
 public:
  using Error::Error;
};

class EmptyDistributionError : public Error {
 public:
  using Error::Error;
};

// Bad or missing configuration; maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Gold/predicted sequences that cannot be aligned sentence by sentence.
class AlignmentError : public Error {
 public:
  AlignmentError(const std::string& what, std::size_t index)
      : Error("alignment error at sentence " + std::to_string(index) + ": " + what), index_(index) {}

  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

// Backend could not be reached or answered with a transport-level failure. Retried.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Backend answered, but the payload carries no usable completion. Not retried.
class MalformedCompletion : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace selftrain
