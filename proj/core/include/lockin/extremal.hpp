#pragma once

#include <cstdint>

#include "lockin/gauge.hpp"
#include "lockin/model.hpp"

namespace lockin {

enum class Sense { Min, Max };

/// Extremizer of f(s, .) over the ellipsoid {x^T P x <= V}.
///
/// For V > 0 the extremum sits on the boundary, and with the denominator
/// absorbed into the multiplier the stationarity condition reads
/// P x = lambda * (sign * b + H x): lambda < 0 for Min, lambda > 0 for Max.
struct ExtremalPoint {
  Vec4 x_star = Vec4::Zero();
  double lambda = 0.0;
  double f_value = 0.0;
  Sense sense = Sense::Min;
};

struct KktOptions {
  int max_iterations = 50;
  /// Residuals are scaled by V (constraint) and sqrt(V) (stationarity).
  double tolerance = 1e-12;
  /// Oracle sample count used to seed cold starts.
  int seed_samples = 512;
};

/// Scaled KKT residual (x^T P x / V - 1, (P x - lambda c) / sqrt(V)).
Eigen::Matrix<double, 5, 1> kkt_residual(PllState s, double V, const Vec4& x, double lambda,
                                         const Gauge& gauge, const CascadeModel& m);

/// Newton iteration on the KKT system from a given start.
/// Throws NoConvergence, or WrongBranch when the multiplier sign does not
/// match `sense`.
ExtremalPoint newton_kkt(PllState s, double V, Sense sense, const Gauge& gauge,
                         const CascadeModel& m, const Vec4& x0, double lambda0,
                         const KktOptions& opts = {});

/// Warm-started Newton; on failure falls back to cold starts seeded by a
/// coarse oracle run and by the linearized solution.
ExtremalPoint solve_kkt(PllState s, double V, Sense sense, const Gauge& gauge,
                        const CascadeModel& m, const ExtremalPoint* warm = nullptr,
                        const KktOptions& opts = {});

struct OracleResult {
  ExtremalPoint point;  // lambda is left at 0
  /// Best objective among interior spot samples (same sense).
  double best_interior = 0.0;
  /// False if an interior sample beat the boundary optimum.
  bool boundary_attained = true;
};

/// Brute-force extremization: n quasi-uniform boundary samples, interior spot
/// checks, then projected-gradient polishing on the ellipsoid. Shares no code
/// path with the Newton solver beyond evaluating f and grad_x f.
OracleResult oracle_extremize(PllState s, double V, Sense sense, const Gauge& gauge,
                              const CascadeModel& m, int n, int polish_steps = 400);

/// Extremal f of the comparison system: the minimum for domega >= 0, the
/// maximum otherwise.
double f_star(PllState s, double V, const Gauge& gauge, const CascadeModel& m,
              const ExtremalPoint* warm = nullptr);

inline Sense comparison_sense(PllState s) { return s.domega >= 0.0 ? Sense::Min : Sense::Max; }

/// Deterministic quasi-uniform unit vectors on S^3 (Halton + Box-Muller).
Vec4 sphere_point(std::uint64_t index);

}  // namespace lockin
