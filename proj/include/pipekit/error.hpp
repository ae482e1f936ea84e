#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pipekit {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Duplicate or malformed stage declarations.
class DeclarationError : public Error {
public:
  using Error::Error;
};

/// A pipeline expression that violates a structural invariant
/// (repeat count < 1, duplicate fork member, undeclared stage).
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Textual pipeline expression or pipeline file that fails to parse.
/// `column` is 1-based; `line` is 1-based and 0 when the error comes
/// from a single-line expression.
class ParseError : public Error {
public:
  ParseError(const std::string& message, std::size_t line, std::size_t column)
      : Error(message), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

private:
  std::size_t line_;
  std::size_t column_;
};

class ElaborationError : public Error {
public:
  using Error::Error;
};

/// Stage configuration that cannot be assembled into a runnable pipeline.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Function-expression evaluation failure (division by zero).
class EvalError : public Error {
public:
  using Error::Error;
};

/// Raised by a router that has no table entry or port for a transaction.
class RoutingError : public Error {
public:
  using Error::Error;
};

class JoinError : public Error {
public:
  using Error::Error;
};

/// Broken internal invariant; indicates a bug rather than bad input.
class InvariantError : public Error {
public:
  using Error::Error;
};

} // namespace pipekit
