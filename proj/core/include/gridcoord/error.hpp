#pragma once

#include <stdexcept>
#include <string>

namespace gridcoord {

enum class ErrorKind {
  SingularMatrix,
  DimensionMismatch,
  ParseError,
  ValidationError,
  InvalidPartition,
  InvalidProfile,
  UnknownVariable,
  TooLarge,
  NoConvergence,
  SingularJacobian,
  InfeasibleStage,
  DegenerateSensitivity,
  SingularInnovation,
  MaxItersExceeded,
  ChecksumMismatch,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace gridcoord
