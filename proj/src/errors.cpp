#include "predmetric/errors.hpp"

namespace predmetric {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Domain: return "DomainError";
    case ErrorKind::NonSPD: return "NonSPD";
    case ErrorKind::Step: return "StepError";
    case ErrorKind::ChartMismatch: return "ChartMismatch";
    case ErrorKind::Integration: return "IntegrationError";
    case ErrorKind::Spec: return "SpecError";
    case ErrorKind::Range: return "RangeError";
    case ErrorKind::NonPositiveRatio: return "NonPositiveRatio";
    case ErrorKind::Window: return "WindowError";
    case ErrorKind::Truncation: return "TruncationError";
    case ErrorKind::DivergentIntegral: return "DivergentIntegral";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Internal: return "InternalError";
  }
  return "Error";
}

}  // namespace predmetric
