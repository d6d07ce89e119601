#pragma once

#include <stdexcept>
#include <string>

namespace datscore {

/// Error category. The CLI maps these onto its exit codes (1, 2, 3).
enum class ErrorKind { validation = 1, io = 2, numerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

// Malformed binary input (bad magic, unsupported mode).
struct FormatError : IoError {
  explicit FormatError(const std::string& what) : IoError(what) {}
};

struct TruncationError : IoError {
  explicit TruncationError(const std::string& what) : IoError(what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

}  // namespace datscore
