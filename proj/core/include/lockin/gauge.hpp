#pragma once

#include <limits>

#include "lockin/model.hpp"

namespace lockin {

/// Quadratic Lyapunov function V(x) = x^T P x of the current loop with
/// dV/dt <= -gamma V along x' = Ax.
struct Gauge {
  Mat4 P = Mat4::Identity();
  double gamma = 0.0;
  /// Lower Cholesky factor, P = L L^T.
  Mat4 chol_L = Mat4::Identity();
  Mat4 P_inv = Mat4::Identity();

  /// Largest eigenvalue of A^T P + P A + gamma P for the A it was built from.
  double decay_margin = 0.0;
};

/// gamma = 2 (1 - margin) |max Re eig(A)| and P from
/// (A + gamma/2 I)^T P + P (A + gamma/2 I) = -I.
Gauge build_gauge(const Mat4& A, double margin = 0.5);

/// Wraps an externally chosen P; checks definiteness and the decay condition.
Gauge make_gauge(const Mat4& A, const Mat4& P, double gamma);

/// Solves A^T X + X A = -Q for symmetric X.
Mat4 solve_lyapunov(const Mat4& A, const Mat4& Q);

double v_cc(const CcState& x, const Gauge& gauge);

/// Point on the ellipsoid {x^T P x = V} in the direction of unit vector u
/// in whitened coordinates: x = sqrt(V) L^{-T} u.
CcState ellipsoid_point(const Gauge& gauge, double V, const Vec4& u);

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

/// Largest V whose ellipsoid keeps |nu^T x| <= (1 - eps_margin) |mu|;
/// kUnbounded when nu = 0.
double singularity_clearance(const Gauge& gauge, const CascadeModel& m, double eps_margin = 0.1);

}  // namespace lockin
