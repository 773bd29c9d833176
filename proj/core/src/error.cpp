#include "lockin/error.hpp"

namespace lockin {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SingularDenominator: return "SingularDenominator";
    case ErrorKind::ModelInvalid: return "ModelInvalid";
    case ErrorKind::NotHurwitz: return "NotHurwitz";
    case ErrorKind::GaugeInfeasible: return "GaugeInfeasible";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::WrongBranch: return "WrongBranch";
    case ErrorKind::StepFailure: return "StepFailure";
    case ErrorKind::IndexViolation: return "IndexViolation";
    case ErrorKind::NoCycle: return "NoCycle";
    case ErrorKind::EmptyFamily: return "EmptyFamily";
    case ErrorKind::SensitivityDiverged: return "SensitivityDiverged";
    case ErrorKind::GradientDegenerate: return "GradientDegenerate";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::NoExtension: return "NoExtension";
    case ErrorKind::GridExhausted: return "GridExhausted";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

}  // namespace lockin
