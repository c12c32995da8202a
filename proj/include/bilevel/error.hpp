#pragma once

#include <stdexcept>
#include <string>

namespace bilevel {

/// Failure categories; each maps to a CLI exit code.
enum class ErrorKind {
  Config,    // invalid configuration or shapes
  Data,      // malformed or out-of-range data
  Sampling,  // a class cannot fill its per-batch allocation
  Io,        // filesystem failures
  Numeric,   // non-finite values, singular systems
  Internal,  // violated internal contracts (mismatched layouts, lengths)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class SamplingError : public Error {
 public:
  explicit SamplingError(const std::string& what) : Error(ErrorKind::Sampling, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

class InternalError : public Error {
 public:
  explicit InternalError(const std::string& what) : Error(ErrorKind::Internal, what) {}
};

/// Throws the subclass matching `kind`.
[[noreturn]] inline void raise(ErrorKind kind, const std::string& what) {
  switch (kind) {
    case ErrorKind::Config: throw ConfigError(what);
    case ErrorKind::Data: throw DataError(what);
    case ErrorKind::Sampling: throw SamplingError(what);
    case ErrorKind::Io: throw IoError(what);
    case ErrorKind::Numeric: throw NumericError(what);
    case ErrorKind::Internal: break;
  }
  throw InternalError(what);
}

/// Process exit code for an error kind: 1 config/data, 2 I/O, 3 numeric.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io:
      return 2;
    case ErrorKind::Numeric:
      return 3;
    default:
      return 1;
  }
}

}  // namespace bilevel
