#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace polar {

enum class ErrorKind {
  InvalidArgument,
  MaxStepsExceeded,
  PathExhausted,
  NoRoot,
  RegimeViolation,
  NoBlowUpDetected,
  QuadratureFailure,
  DomainError,
  Divergence,
  Config,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace polar
