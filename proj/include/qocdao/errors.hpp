#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qocdao {

// Error taxonomy. Every error raised by the library derives from Error so
// callers (CLI, service) can map families to exit codes / HTTP statuses.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a mathematical precondition of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Structured input failed validation; carries every violation found.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> violations)
      : Error(join(violations)), violations_(std::move(violations)) {}
  explicit ValidationError(const std::string& violation)
      : ValidationError(std::vector<std::string>{violation}) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "validation failed";
    for (std::size_t i = 0; i < v.size(); ++i) {
      out += (i == 0 ? ": " : "; ");
      out += v[i];
    }
    return out;
  }

  std::vector<std::string> violations_;
};

// Operation is illegal in the vote's current lifecycle state or mode.
class StateError : public Error {
 public:
  using Error::Error;
};

// Identifier already in use.
class ConflictError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Model backend failure. Transport failures are retryable.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retryable) : Error(what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

// A cell could not be scored after exhausting retries.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

// Malformed line in a newline-delimited input file.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace qocdao
