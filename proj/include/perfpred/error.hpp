#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace perfpred {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition (bad sizes, ranges, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: singular systems, collapsed mixture components,
/// exhausted retry budgets.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed tabular input. `line()` is 1-based; 0 means "no specific line".
class ParseError : public Error {
 public:
  enum class Kind {
    kMissingHeader,
    kBadHeader,
    kColumnCount,
    kNonNumeric,
    kUnknownLabel,
    kNonFinite,
    kIo,
  };

  ParseError(Kind kind, std::size_t line, const std::string& what)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        kind_(kind),
        line_(line) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

}  // namespace perfpred
