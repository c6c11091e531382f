#pragma once

#include <stdexcept>
#include <string>

namespace monocert {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Syntax or semantic error in system text, with a 1-based source position.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, int line, int column, const std::string& file = "")
      : Error((file.empty() ? "" : file + ":") + std::to_string(line) + ":" +
              std::to_string(column) + ": " + message),
        message_(message),
        line_(line),
        column_(column) {}

  const std::string& message() const { return message_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string message_;
  int line_;
  int column_;
};

/// Numeric evaluation failed (division by zero or a non-finite result).
class EvalError : public Error {
 public:
  using Error::Error;
};

/// Raised when differentiating through min/max; the Jacobian handles it per branch.
class BranchRequired : public Error {
 public:
  using Error::Error;
};

/// An input was outside the operation's domain (bad weights, bad box, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A weight family is not positive (or not bounded) on the working box.
class WeightError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

}  // namespace monocert
