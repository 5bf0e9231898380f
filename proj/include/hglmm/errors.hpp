#pragma once

#include <stdexcept>
#include <string>

namespace hglmm {

/// Failure categories. The CLI maps each one to its own exit code.
enum class ErrorKind { Format = 2, Validation = 2, Shape = 3, Numerical = 4, Domain = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Malformed file contents or unreadable files.
struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ErrorKind::Format, what) {}
};

/// Well-formed data that violates a type invariant (non-finite values, duplicate ids, ...).
struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

/// Dimension or count mismatch between operands.
struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorKind::Shape, what) {}
};

/// Rank deficiency, singular systems and similar numerical breakdowns.
struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error(ErrorKind::Domain, what) {}
};

}  // namespace hglmm
