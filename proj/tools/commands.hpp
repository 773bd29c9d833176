#pragma once

#include <iosfwd>

#include "config.hpp"

namespace lockin::cli {

enum ExitCode : int {
  kOk = 0,
  kAssumptions = 2,
  kValidation = 3,
  kNumerical = 4,
};

/// Hurwitz test on A, oscillation test on the PLL linearization, gauge.
int cmd_check(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// gauge -> family -> growth -> Phi; writes family.csv, growth.csv,
/// domain.csv and summary.json under cfg.output.
int cmd_estimate(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Monte Carlo inside the inset estimate plus the trivial-square audit;
/// writes validation.json.
int cmd_validate(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// One trajectory to trajectory.csv.
int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Per-cycle table and decimated cycle outlines for plotting.
int cmd_export(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace lockin::cli
