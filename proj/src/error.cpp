#include "polar/error.hpp"

namespace polar {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::MaxStepsExceeded: return "MaxStepsExceeded";
    case ErrorKind::PathExhausted: return "PathExhausted";
    case ErrorKind::NoRoot: return "NoRoot";
    case ErrorKind::RegimeViolation: return "RegimeViolation";
    case ErrorKind::NoBlowUpDetected: return "NoBlowUpDetected";
    case ErrorKind::QuadratureFailure: return "QuadratureFailure";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::Divergence: return "Divergence";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace polar
