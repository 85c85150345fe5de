#pragma once

#include <stdexcept>
#include <string>

namespace cotsched {

// Exit codes shared by the CLI: 0 ok, 1 usage, 2 validation, 3 numeric failure.
enum class ExitCode : int { kOk = 0, kUsage = 1, kValidation = 2, kNumeric = 3 };

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual ExitCode exit_code() const { return ExitCode::kValidation; }
};

class UsageError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::kUsage; }
};

// Malformed input (bad JSON, wrong types). Carries the 1-based line number
// when the input is line oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

// Well-formed input that violates a documented invariant or precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::kNumeric; }
};

}  // namespace cotsched
