#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lockin/comparison.hpp"

namespace lockin {

struct FamilyOptions {
  /// First level after the origin; 0 calibrates it so that the first cycle
  /// has roughly `seed_radius` radians of phase swing.
  double V_seed = 0.0;
  double seed_radius = 1e-2;
  /// Continuation stops once the V step falls below V_step_min * V.
  double V_step_min = 1e-3;
  double V_max = kUnbounded;
  double step_growth = 1.5;
  /// Upper bound on a V step as a fraction of the current V.
  double max_step_fraction = 0.25;
  int max_cycles = 400;

  double cycle_tol = 1e-7;
  double band_margin = 0.05;
  /// Margin to the f singularity used for V_safe.
  double eps_margin = 0.1;
  int revolution_cap = 200;
  /// Time budget per revolution in units of the linearized PLL period.
  double revolution_time_factor = 20.0;
  int samples_per_cycle = 2000;

  double sens_tol = 1e-6;
  double det_floor = 1e-8;
  double max_degenerate_fraction = 0.2;

  StepOptions step;
  KktOptions kkt;
};

struct CycleSample {
  double t = 0.0;
  PllState s;
  int mode = 0;
  Vec2 velocity = Vec2::Zero();
  Vec2 prime = Vec2::Zero();  // d(dtheta, domega)/dV
  Vec2 grad = Vec2::Zero();   // grad V^PLL
  bool grad_filled = false;   // interpolated from neighbours
};

/// Sampled periodic orbit of the comparison system at level V, starting and
/// ending on the section {domega = 0, dtheta > 0}.
struct LimitCycle {
  double V = 0.0;
  double period = 0.0;
  double section_dtheta = 0.0;
  /// Return-map slope at the fixed point.
  double multiplier = 0.0;
  int revolutions = 0;
  /// Largest angle between the one-sided tangents at the branch switches.
  double switch_tangent_jump = 0.0;
  /// Closure gap of the stored revolution in dtheta.
  double closure = 0.0;
  std::vector<CycleSample> samples;

  /// Polar angles of the samples about the origin, unwrapped. Filled by
  /// index_cycle; `star` is set when they decrease strictly over one turn,
  /// which enables logarithmic point-in-cycle and ray queries.
  std::vector<double> polar_angle;
  bool star = false;

  bool has_primes = false;
  /// d(section_dtheta)/dV from the periodic primes.
  double section_prime = 0.0;
  bool has_grad = false;
  int degenerate_samples = 0;

  bool is_origin() const { return V == 0.0; }
};

struct CycleFamily {
  std::vector<LimitCycle> cycles;  // cycles[0] is the origin (V = 0)
  double V_bar = 0.0;
  double V_safe = kUnbounded;
  double V_seed = 0.0;
  double band_margin = 0.05;
  /// Reason the continuation stopped.
  std::string stop_reason;
};

/// Linearized PLL period 2 pi / |Im lambda|.
double linear_period(const CascadeModel& m);

LimitCycle origin_cycle(const CascadeModel& m);

/// Converges the return map on the section from `dtheta_start` and stores one
/// densely sampled revolution. Throws NoCycle on escape from the band, on the
/// revolution cap, on the time cap, or when the fixed point is unstable.
LimitCycle find_limit_cycle(double V, double dtheta_start, const Gauge& gauge,
                            const CascadeModel& m, const FamilyOptions& opts = {});

/// Integrates the state and its V-derivative around the cycle with periodic
/// primes; replaces the samples with the combined run.
void attach_sensitivity(LimitCycle& cycle, const Gauge& gauge, const CascadeModel& m,
                        const FamilyOptions& opts = {});

/// Solves grad . velocity = 0, grad . prime = 1 at every sample.
void attach_gradient(LimitCycle& cycle, const FamilyOptions& opts = {});

/// Points only.
CycleFamily continue_family(const Gauge& gauge, const CascadeModel& m,
                            const FamilyOptions& opts = {});

/// continue_family followed by sensitivities and gradients on every cycle.
CycleFamily build_family(const Gauge& gauge, const CascadeModel& m,
                         const FamilyOptions& opts = {});

/// Rebuilds the polar index after the samples changed.
void index_cycle(LimitCycle& c);

double signed_area(const LimitCycle& c);
bool point_in_cycle(PllState p, const LimitCycle& c);
/// Distance from the origin to the cycle along the direction of p.
double ray_distance(PllState p, const LimitCycle& c);

struct NestingReport {
  int pairs = 0;
  int violations = 0;
  int first_violation = -1;  // index k of the failing pair (k, k+1)
};

NestingReport check_nesting(const CycleFamily& fam);

/// V^PLL from the family: linear in the radius between neighbouring cycles,
/// quadratic inside the first one. nullopt outside Lambda(V_bar).
std::optional<double> query_vpll(PllState p, const CycleFamily& fam);

double max_abs_dtheta(const LimitCycle& c);

/// CSV: V,t,dtheta,domega,dtheta_prime,domega_prime,grad_1,grad_2
void write_family_csv(std::ostream& os, const CycleFamily& fam);

/// Inverse of write_family_csv. Restores samples, primes and gradients and
/// rebuilds the polar index; section data and velocities are not stored.
CycleFamily read_family_csv(std::istream& is);

}  // namespace lockin
