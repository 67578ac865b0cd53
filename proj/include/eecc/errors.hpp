#pragma once

#include <stdexcept>
#include <string>

namespace eecc {

enum class ErrorKind {
  DegenerateModel,     // every model splat fell outside the window
  DegenerateWindow,    // zero-norm vector handed to the ECC criterion
  SolverDegenerate,    // closed-form step preconditions violated
  ContractViolation,   // stale change set, shape mismatch, ...
  InitStarved,         // stream ended before the buffer filled
  OutOfOrder,          // timestamp went backwards
  Parse,
  Config,
  Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace eecc
