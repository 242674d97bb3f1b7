#pragma once

#include <stdexcept>
#include <string>

namespace effdim {

enum class ErrorKind {
  InvalidInput,
  InvalidConfig,
  InvalidRegularizer,
  SymmetryViolation,
  Pole,
  Shape,
  Precondition,
  Convergence,
  Divergence,
  Size,
  DegenerateDirection,
  InsufficientData,
  UndefinedCorrelation,
  DefinitionViolation,
  Io,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (the CLI in
// particular) can map it to an exit code without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::InvalidConfig: return "invalid config";
    case ErrorKind::InvalidRegularizer: return "invalid regularizer";
    case ErrorKind::SymmetryViolation: return "symmetry violation";
    case ErrorKind::Pole: return "pole";
    case ErrorKind::Shape: return "shape mismatch";
    case ErrorKind::Precondition: return "precondition violated";
    case ErrorKind::Convergence: return "no convergence";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Size: return "size guard";
    case ErrorKind::DegenerateDirection: return "degenerate direction";
    case ErrorKind::InsufficientData: return "insufficient data";
    case ErrorKind::UndefinedCorrelation: return "undefined correlation";
    case ErrorKind::DefinitionViolation: return "definition violation";
    case ErrorKind::Io: return "io";
  }
  return "error";
}

}  // namespace effdim
