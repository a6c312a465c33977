#pragma once

#include <stdexcept>
#include <string>

namespace stcp {

enum class ErrorKind {
  Shape,
  Data,
  Format,
  Config,
  Divergence,
  Io,
};

/// Single exception type for the library. The kind decides the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Divergence: return "divergence error";
    case ErrorKind::Io: return "io error";
  }
  return "error";
}

/// Process exit code for an error kind: 2 config, 3 data, 4 divergence.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Shape:
    case ErrorKind::Data:
    case ErrorKind::Format: return 3;
    case ErrorKind::Divergence: return 4;
    case ErrorKind::Io: return 1;
  }
  return 1;
}

}  // namespace stcp
