#pragma once

#include <stdexcept>
#include <string>

namespace fvslide {

// Validation errors map to exit code 1, I/O errors to exit code 2.
enum class ErrorKind { validation, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(const std::string& message) {
  throw Error(ErrorKind::validation, message);
}

[[noreturn]] inline void fail_io(const std::string& message) {
  throw Error(ErrorKind::io, message);
}

// Re-throws with a prefix while keeping the error kind.
[[noreturn]] inline void rethrow_with_context(const Error& e,
                                              const std::string& context) {
  throw Error(e.kind(), context + ": " + e.what());
}

}  // namespace fvslide
