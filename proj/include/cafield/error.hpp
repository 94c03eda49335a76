#pragma once

#include <stdexcept>
#include <string>

namespace cafield {

/// Failure categories. Each maps onto one CLI exit code.
enum class ErrorKind {
  Dimension,
  Domain,
  Usage,
  Format,
  Io,
  DegenerateInput,
  Numeric,
  Verification,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorKind::Dimension, w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::Domain, w) {}
};
struct UsageError : Error {
  explicit UsageError(const std::string& w) : Error(ErrorKind::Usage, w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorKind::Format, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::Io, w) {}
};
struct DegenerateInputError : Error {
  explicit DegenerateInputError(const std::string& w)
      : Error(ErrorKind::DegenerateInput, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

/// 0 success, 1 usage, 2 data/format, 3 numeric/divergence, 4 verification.
inline int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::Dimension:
      return 1;
    case ErrorKind::Domain:
    case ErrorKind::Format:
    case ErrorKind::Io:
    case ErrorKind::DegenerateInput:
      return 2;
    case ErrorKind::Numeric:
      return 3;
    case ErrorKind::Verification:
      return 4;
  }
  return 1;
}

}  // namespace cafield
