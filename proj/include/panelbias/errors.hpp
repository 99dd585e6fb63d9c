#pragma once

#include <stdexcept>
#include <string>

namespace panelbias {

/// Broad failure class; the CLI maps it to an exit code.
enum class ErrorKind {
  Usage,           // bad flags or arguments
  Schema,          // missing column, wrong file layout
  Parse,           // non-numeric value, malformed line
  DuplicateKey,    // repeated (unit, time) pair
  Consistency,     // dimension mismatch
  Validity,        // value outside its domain (negative variance, ...)
  Estimability,    // k not in the row space of X
  Parameter,       // invalid algorithm parameter
  EmptyComparison, // no terms left to test
  Numerical,       // non-finite likelihood, factorization failure
  Rank,            // collinear design
  InsufficientData,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// 2 for usage/schema-type problems, 3 for numerical ones.
  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::Numerical:
      case ErrorKind::Rank:
      case ErrorKind::InsufficientData:
        return 3;
      default:
        return 2;
    }
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace panelbias
