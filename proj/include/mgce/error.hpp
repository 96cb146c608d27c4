#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mgce {

// Library-wide exception. `code` is a stable machine-readable tag
// (snake_case); the CLI prints "<code>: <message>" as its single error line.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void fail(std::string code, const std::string& message) {
  throw Error(std::move(code), message);
}

inline void require(bool cond, const char* code, const std::string& message) {
  if (!cond) fail(code, message);
}

}  // namespace mgce
