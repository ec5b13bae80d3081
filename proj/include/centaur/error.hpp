#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace centaur {

// Error with a stable machine-parsable code ("invalid-parameter",
// "all-zero-scores", ...) plus a human detail message. The CLI prints
// "error: <code>: <detail>" on one line and exits nonzero.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void raise(const std::string& code, const std::string& detail) {
  throw Error(code, detail);
}

inline void require(bool cond, const std::string& code, const std::string& detail) {
  if (!cond) raise(code, detail);
}

}  // namespace centaur
