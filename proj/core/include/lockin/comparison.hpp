#pragma once

#include "lockin/dae.hpp"
#include "lockin/extremal.hpp"

namespace lockin {

/// The V-comparison system as a semi-explicit DAE.
///
/// Differential variables: (dtheta, domega) and, with sensitivities, their
/// V-derivatives (dtheta', domega').
/// Algebraic variables: (x_min, lambda_min, x_max, lambda_max) and, with
/// sensitivities, the V-derivatives of those ten entries.
/// Mode 0 uses the minimizer (domega >= 0), mode 1 the maximizer.
namespace comparison {

inline constexpr int kModeMin = 0;
inline constexpr int kModeMax = 1;

inline constexpr int kSwitchEvent = 0;  // domega = 0
inline constexpr int kBandEvent = 1;    // |dtheta| = pi - band_margin

inline constexpr int kXMin = 0;
inline constexpr int kLambdaMin = 4;
inline constexpr int kXMax = 5;
inline constexpr int kLambdaMax = 9;
inline constexpr int kPrimeOffset = 10;

}  // namespace comparison

struct ComparisonSystem {
  double V = 0.0;
  bool with_sensitivity = false;
  SemiExplicitDae dae;
};

/// Builds the comparison DAE at level V > 0. The band event terminates the
/// integration; the switch event re-selects the branch and, with
/// sensitivities, applies the saltation jump to the primes.
ComparisonSystem make_comparison_system(double V, const Gauge& gauge, const CascadeModel& m,
                                        double band_margin, bool with_sensitivity,
                                        const KktOptions& kkt = {});

/// Consistent state at s (and primes p when the system carries them).
DaeState comparison_state(const ComparisonSystem& sys, PllState s, Vec2 prime = Vec2::Zero());

/// Extremal f for the given mode from an algebraic vector.
double comparison_f(const VectorXd& z, int mode, PllState s, const CascadeModel& m);

/// Velocity (dtheta', domega') of the comparison system.
Vec2 comparison_velocity(PllState s, double f_star, const CascadeModel& m);

/// Mode on the switching line from the direction of motion.
int mode_on_switch_line(double f_min, double f_max);

}  // namespace lockin
