#include "lockin/extremal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>

#include "lockin/error.hpp"

namespace lockin {

namespace {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

double radical_inverse(std::uint64_t i, std::uint64_t base) {
  double inv = 1.0 / static_cast<double>(base);
  double f = inv;
  double r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

double signed_objective(double f, Sense sense) { return sense == Sense::Max ? f : -f; }

bool better(double a, double b, Sense sense) { return sense == Sense::Max ? a > b : a < b; }

Vec5 residual(const Vec4& x, double lambda, double V, double sqrtV, const Vec4& Px,
              const Vec4& c) {
  Vec5 r;
  r[0] = x.dot(Px) / V - 1.0;
  r.tail<4>() = (Px - lambda * c) / sqrtV;
  return r;
}

bool converged(const Vec5& r, const Vec4& Px, double sqrtV, double tol) {
  const double scale = std::max(1.0, Px.norm() / sqrtV);
  return std::abs(r[0]) <= tol && r.tail<4>().norm() <= tol * scale;
}

ExtremalPoint degenerate_point(PllState s, Sense sense, const CascadeModel& m) {
  ExtremalPoint p;
  p.sense = sense;
  p.f_value = eval_f(s, Vec4::Zero(), m);
  return p;
}

}  // namespace

Vec4 sphere_point(std::uint64_t index) {
  const std::uint64_t k = index + 1;
  const double u1 = radical_inverse(k, 2);
  const double u2 = radical_inverse(k, 3);
  const double u3 = radical_inverse(k, 5);
  const double u4 = radical_inverse(k, 7);
  const double two_pi = 2.0 * std::numbers::pi;
  const double r1 = std::sqrt(-2.0 * std::log(std::max(u1, 1e-300)));
  const double r2 = std::sqrt(-2.0 * std::log(std::max(u3, 1e-300)));
  Vec4 v(r1 * std::cos(two_pi * u2), r1 * std::sin(two_pi * u2), r2 * std::cos(two_pi * u4),
         r2 * std::sin(two_pi * u4));
  const double n = v.norm();
  if (n == 0.0) return Vec4(1.0, 0.0, 0.0, 0.0);
  return v / n;
}

Eigen::Matrix<double, 5, 1> kkt_residual(PllState s, double V, const Vec4& x, double lambda,
                                         const Gauge& gauge, const CascadeModel& m) {
  const Vec4 Px = gauge.P * x;
  const Vec4 c = m.kkt_direction(s, x);
  return residual(x, lambda, V, std::sqrt(V), Px, c);
}

ExtremalPoint newton_kkt(PllState s, double V, Sense sense, const Gauge& gauge,
                         const CascadeModel& m, const Vec4& x0, double lambda0,
                         const KktOptions& opts) {
  if (V == 0.0) return degenerate_point(s, sense, m);
  const double sqrtV = std::sqrt(V);
  const CouplingTerms t = m.terms(s);
  const double sgn = m.sign_factor();

  Vec4 x = x0;
  double lambda = lambda0;
  Vec4 Px = gauge.P * x;
  Vec4 c = sgn * t.b + t.H * x;
  Vec5 r = residual(x, lambda, V, sqrtV, Px, c);

  bool done = converged(r, Px, sqrtV, opts.tolerance);
  for (int it = 0; it < opts.max_iterations && !done; ++it) {
    Mat5 J;
    J(0, 0) = 0.0;
    J.block<1, 4>(0, 1) = 2.0 * Px.transpose() / V;
    J.block<4, 1>(1, 0) = -c / sqrtV;
    J.block<4, 4>(1, 1) = (gauge.P - lambda * t.H) / sqrtV;
    Vec5 rr;
    rr[0] = r[0];
    rr.tail<4>() = r.tail<4>();
    const Eigen::PartialPivLU<Mat5> lu(J);
    const Vec5 delta = lu.solve(-rr);
    if (!delta.allFinite()) break;

    const double merit = r.norm();
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      const double lam_try = lambda + alpha * delta[0];
      const Vec4 x_try = x + alpha * delta.tail<4>();
      const Vec4 Px_try = gauge.P * x_try;
      const Vec4 c_try = sgn * t.b + t.H * x_try;
      const Vec5 r_try = residual(x_try, lam_try, V, sqrtV, Px_try, c_try);
      if (r_try.allFinite() && (r_try.norm() < merit || alpha < 1e-6)) {
        x = x_try;
        lambda = lam_try;
        Px = Px_try;
        c = c_try;
        r = r_try;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    done = converged(r, Px, sqrtV, opts.tolerance);
  }

  if (!done) {
    std::ostringstream os;
    os << "KKT Newton stalled at residual " << r.norm() << " (V=" << V << ")";
    throw Error(ErrorKind::NoConvergence, os.str());
  }
  const bool sign_ok = sense == Sense::Max ? lambda > 0.0 : lambda < 0.0;
  if (!sign_ok) {
    std::ostringstream os;
    os << "multiplier " << lambda << " has the wrong sign for "
       << (sense == Sense::Max ? "max" : "min");
    throw Error(ErrorKind::WrongBranch, os.str());
  }

  ExtremalPoint p;
  p.x_star = x;
  p.lambda = lambda;
  p.sense = sense;
  p.f_value = eval_f(s, x, m);
  return p;
}

ExtremalPoint solve_kkt(PllState s, double V, Sense sense, const Gauge& gauge,
                        const CascadeModel& m, const ExtremalPoint* warm,
                        const KktOptions& opts) {
  if (!(V >= 0.0)) throw Error(ErrorKind::OutOfRange, "ellipsoid level must be non-negative");
  if (V == 0.0) return degenerate_point(s, sense, m);

  if (warm != nullptr && warm->sense == sense && warm->x_star.squaredNorm() > 0.0) {
    // Rescale the previous extremizer onto the current level first.
    const double q = warm->x_star.dot(gauge.P * warm->x_star);
    const double k = std::sqrt(V / q);
    try {
      return newton_kkt(s, V, sense, gauge, m, k * warm->x_star, warm->lambda * k, opts);
    } catch (const Error&) {
      // fall through to a cold start
    }
  }

  const double sgn = m.sign_factor();
  const CouplingTerms t = m.terms(s);
  std::optional<ExtremalPoint> best;
  bool wrong_branch = false;
  auto attempt = [&](const Vec4& x0) {
    const Vec4 c = sgn * t.b + t.H * x0;
    const double cc = c.squaredNorm();
    const double lam0 = cc > 0.0 ? c.dot(gauge.P * x0) / cc : (sense == Sense::Max ? 1.0 : -1.0);
    try {
      ExtremalPoint p = newton_kkt(s, V, sense, gauge, m, x0, lam0, opts);
      if (!best || better(p.f_value, best->f_value, sense)) best = p;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::WrongBranch) wrong_branch = true;
    }
  };

  const Vec4 c0 = sgn * t.b;
  const double q0 = c0.dot(gauge.P_inv * c0);
  if (q0 > 0.0) {
    const double k = std::sqrt(V / q0) * (sense == Sense::Max ? 1.0 : -1.0);
    attempt(k * (gauge.P_inv * c0));
  }
  const OracleResult seed = oracle_extremize(s, V, sense, gauge, m, opts.seed_samples, 0);
  attempt(seed.point.x_star);

  if (!best) {
    throw Error(wrong_branch ? ErrorKind::WrongBranch : ErrorKind::NoConvergence,
                "KKT cold start failed for every seed");
  }
  return *best;
}

OracleResult oracle_extremize(PllState s, double V, Sense sense, const Gauge& gauge,
                              const CascadeModel& m, int n, int polish_steps) {
  OracleResult out;
  out.point.sense = sense;
  if (V <= 0.0) {
    out.point.f_value = eval_f(s, Vec4::Zero(), m);
    out.best_interior = out.point.f_value;
    return out;
  }

  constexpr int kTop = 8;
  std::array<std::pair<double, Vec4>, kTop> top;
  top.fill({-std::numeric_limits<double>::infinity(), Vec4::Zero()});
  for (int i = 0; i < std::max(n, 1); ++i) {
    const Vec4 x = ellipsoid_point(gauge, V, sphere_point(static_cast<std::uint64_t>(i)));
    const double val = signed_objective(eval_f(s, x, m), sense);
    if (val > top.back().first) {
      top.back() = {val, x};
      std::sort(top.begin(), top.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    }
  }

  double best_int = -std::numeric_limits<double>::infinity();
  for (const auto& [val, x] : top) {
    if (!std::isfinite(val)) continue;
    for (double scale : {0.25, 0.5, 0.75, 0.95}) {
      best_int = std::max(best_int, signed_objective(eval_f(s, scale * x, m), sense));
    }
  }
  // The origin is an interior point too.
  best_int = std::max(best_int, signed_objective(eval_f(s, Vec4::Zero(), m), sense));

  Vec4 x = top.front().second;
  double val = top.front().first;
  auto retract = [&](const Vec4& y) {
    const double q = y.dot(gauge.P * y);
    return q > 0.0 ? Vec4(y * std::sqrt(V / q)) : y;
  };

  double alpha = 0.05;
  for (int it = 0; it < polish_steps; ++it) {
    const FPartials p = eval_f_partials(s, x, m);
    const Vec4 g = sense == Sense::Max ? p.grad_x : Vec4(-p.grad_x);
    const Vec4 dir = gauge.P_inv * g;
    const double dnorm = std::sqrt(dir.dot(gauge.P * dir));
    if (dnorm == 0.0) break;
    const Vec4 unit_dir = dir * (std::sqrt(V) / dnorm);
    const Vec4 x_try = retract(x + alpha * unit_dir);
    const double v_try = signed_objective(eval_f(s, x_try, m), sense);
    if (v_try > val) {
      x = x_try;
      val = v_try;
      alpha = std::min(alpha * 2.0, 1e6);
    } else {
      alpha *= 0.25;
      if (alpha < 1e-14) break;
    }
  }

  out.point.x_star = x;
  out.point.f_value = eval_f(s, x, m);
  out.best_interior = sense == Sense::Max ? best_int : -best_int;
  const double tol = 1e-9 * std::max(1.0, std::abs(val));
  out.boundary_attained = best_int <= val + tol;
  return out;
}

double f_star(PllState s, double V, const Gauge& gauge, const CascadeModel& m,
              const ExtremalPoint* warm) {
  return solve_kkt(s, V, comparison_sense(s), gauge, m, warm).f_value;
}

}  // namespace lockin
