#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "lockin/domain.hpp"

namespace lockin {

struct SimOptions {
  /// Final time; 0 picks default_horizon.
  double horizon = 0.0;
  /// Convergence ball: V^CC <= ball_vcc and |(dtheta, domega)| <= ball_pll,
  /// held for `dwell` seconds (0: five linearized PLL periods).
  double ball_vcc = 1e-2;
  double ball_pll = 1e-3;
  double dwell = 0.0;
  double rtol = 1e-8;
  double atol = 1e-10;
  bool record = false;
  /// Spacing of recorded samples in t (0: a fiftieth of the PLL period).
  double sample_spacing = 0.0;
};

struct TrajectorySample {
  double t = 0.0;
  Vec6 state = Vec6::Zero();  // (dtheta, domega, x)
};

struct TrajectoryOutcome {
  bool converged = false;
  bool slipped = false;
  double t_final = 0.0;
  double min_dtheta = 0.0;
  double max_dtheta = 0.0;
  std::vector<TrajectorySample> trajectory;

  bool inconclusive() const { return !converged && !slipped; }
};

/// 50 slow time constants: max(2 / gamma, 1 / |Re lambda_PLL|) each.
double default_horizon(const CascadeModel& m, const Gauge& gauge);

/// Integrates the closed loop with a terminating event at |dtheta| = pi.
TrajectoryOutcome simulate(const Vec6& state0, const CascadeModel& m, const Gauge& gauge,
                           const SimOptions& opts = {});

struct McOptions {
  SimOptions sim;
  /// Relative inset of the sampled set in both coordinates.
  double inset = 0.01;
  /// Ball size relative to V_bar when sim.ball_vcc is left at its default.
  double ball_vcc_rel = 1e-6;
  int max_rejections = 100000;
  /// 0: hardware concurrency.
  int threads = 0;
  bool keep_trajectories = false;
};

struct McTrajectory {
  Vec6 state0 = Vec6::Zero();
  double vcc0 = 0.0;
  double vpll0 = 0.0;
  TrajectoryOutcome outcome;
  /// min over the run of Phi(V^CC) - V^PLL while inside Lambda(V_bar).
  double margin = 0.0;
  /// Left {V^PLL <= Phi(V^CC)} at some sample.
  bool exited = false;
};

struct McReport {
  int n = 0;
  int n_converged = 0;
  int n_slipped = 0;
  int n_inconclusive = 0;
  int n_exited = 0;
  double worst_margin = 0.0;
  std::vector<McTrajectory> runs;
};

/// Draws an initial state inside the estimate with the given inset:
/// V^CC level uniform on [0, (1 - inset) V_bar_bar], x uniform in direction
/// on that ellipsoid, (dtheta, domega) by rejection inside
/// Lambda((1 - inset) Phi(V^CC)).
Vec6 sample_inside(const DomainEstimate& est, const CycleFamily& fam, const Gauge& gauge,
                   double inset, int max_rejections, std::mt19937_64& rng);

/// Samples N initial states inside the estimate and simulates them.
/// Deterministic for a fixed seed regardless of the thread count.
McReport monte_carlo_validate(const DomainEstimate& est, const CycleFamily& fam,
                              const Gauge& gauge, const CascadeModel& m, int N,
                              std::uint64_t seed, const McOptions& opts = {});

struct AuditReport {
  int samples = 0;
  int violations = 0;
  double worst_excess = 0.0;
};

/// Flags increases of max(V^PLL, V^CC) along a recorded trajectory beyond
/// tol_rel * (running minimum) + tol_abs. Samples outside Lambda(V_bar)
/// count as violations.
AuditReport lyapunov_audit(const TrajectoryOutcome& traj, const CycleFamily& fam,
                           const Gauge& gauge, double tol_rel = 1e-2, double tol_abs = 1e-9);

}  // namespace lockin
