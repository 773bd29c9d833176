#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lockin {

/// Failure categories raised by the numerical pipeline.
enum class ErrorKind {
  SingularDenominator,
  ModelInvalid,
  NotHurwitz,
  GaugeInfeasible,
  NoConvergence,
  WrongBranch,
  StepFailure,
  IndexViolation,
  NoCycle,
  EmptyFamily,
  SensitivityDiverged,
  GradientDegenerate,
  OutOfRange,
  NoExtension,
  GridExhausted,
  ConfigInvalid,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace lockin
