#include "lockin/dae.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lockin/error.hpp"

namespace lockin {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                 a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
// Dense output (Hairer & Wanner, DOPRI5 contd5).
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

double error_norm(const VectorXd& err, const VectorXd& y0, const VectorXd& y1,
                  const StepOptions& o) {
  const int n = o.error_components < 0 ? static_cast<int>(err.size())
                                       : std::min<int>(o.error_components, err.size());
  if (n == 0) return 0.0;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double sc = o.atol + o.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    const double q = err[i] / sc;
    acc += q * q;
  }
  return std::sqrt(acc / n);
}

struct Eval {
  VectorXd z;
  VectorXd ydot;
};

Eval evaluate(const SemiExplicitDae& dae, double t, const VectorXd& y, const VectorXd& z_guess,
              int mode, const StepOptions& o) {
  Eval e;
  e.z = solve_algebraic(dae, t, y, z_guess, o);
  e.ydot.resize(dae.n_diff);
  dae.rhs(t, y, e.z, mode, e.ydot);
  return e;
}

double residual_norm(const SemiExplicitDae& dae, double t, const VectorXd& y, const VectorXd& z) {
  if (dae.n_alg == 0 || !dae.residual) return 0.0;
  VectorXd r(dae.n_alg);
  dae.residual(t, y, z, r);
  return r.norm();
}

}  // namespace

VectorXd solve_algebraic(const SemiExplicitDae& dae, double t, const VectorXd& y,
                         const VectorXd& guess, const StepOptions& o) {
  if (dae.n_alg == 0) return VectorXd();
  if (dae.alg_solve) return dae.alg_solve(t, y, guess);

  VectorXd z = guess.size() == dae.n_alg ? guess : VectorXd::Zero(dae.n_alg);
  VectorXd r(dae.n_alg);
  MatrixXd J(dae.n_alg, dae.n_alg);
  for (int it = 0; it <= o.alg_max_iterations; ++it) {
    dae.residual(t, y, z, r);
    if (!r.allFinite()) break;
    if (r.norm() <= o.alg_tol * (1.0 + z.norm())) return z;
    if (dae.alg_jacobian) {
      dae.alg_jacobian(t, y, z, J);
    } else {
      VectorXd rp(dae.n_alg);
      for (int j = 0; j < dae.n_alg; ++j) {
        const double dz = 1e-7 * (1.0 + std::abs(z[j]));
        VectorXd zp = z;
        zp[j] += dz;
        dae.residual(t, y, zp, rp);
        J.col(j) = (rp - r) / dz;
      }
    }
    Eigen::FullPivLU<MatrixXd> lu(J);
    if (!lu.isInvertible()) {
      throw Error(ErrorKind::IndexViolation, "algebraic Jacobian is singular");
    }
    z -= lu.solve(r);
  }
  throw Error(ErrorKind::StepFailure, "algebraic Newton iteration did not converge");
}

DaeState make_consistent(const SemiExplicitDae& dae, double t, const VectorXd& y,
                         const VectorXd& z_guess, const StepOptions& opts) {
  DaeState s;
  s.t = t;
  s.diff = y;
  s.alg = solve_algebraic(dae, t, y, z_guess, opts);
  s.mode = dae.select_mode ? dae.select_mode(t, y, s.alg, 0) : 0;
  return s;
}

StepResult step(const SemiExplicitDae& dae, const DaeState& st, double h_try,
                const StepOptions& o) {
  double h = std::min(std::abs(h_try), o.h_max);
  const double dir = h_try < 0.0 ? -1.0 : 1.0;
  const VectorXd& y0 = st.diff;
  const int n = dae.n_diff;

  VectorXd k1(n);
  dae.rhs(st.t, y0, st.alg, st.mode, k1);

  std::string last_failure;
  ErrorKind last_kind = ErrorKind::StepFailure;
  while (true) {
    if (h < o.h_min) {
      if (last_kind == ErrorKind::SingularDenominator) {
        std::ostringstream os;
        os << "step size collapsed at t=" << st.t << " next to a singular denominator";
        throw Error(last_kind, os.str());
      }
      std::ostringstream os;
      os << "step size " << h << " below minimum at t=" << st.t;
      if (!last_failure.empty()) os << " (" << last_failure << ")";
      throw Error(ErrorKind::StepFailure, os.str());
    }
    const double hs = dir * h;
    try {
      const Eval s2 = evaluate(dae, st.t + c2 * hs, y0 + hs * (a21 * k1), st.alg, st.mode, o);
      const Eval s3 = evaluate(dae, st.t + c3 * hs, y0 + hs * (a31 * k1 + a32 * s2.ydot), s2.z,
                               st.mode, o);
      const Eval s4 = evaluate(dae, st.t + c4 * hs,
                               y0 + hs * (a41 * k1 + a42 * s2.ydot + a43 * s3.ydot), s3.z,
                               st.mode, o);
      const Eval s5 = evaluate(
          dae, st.t + c5 * hs,
          y0 + hs * (a51 * k1 + a52 * s2.ydot + a53 * s3.ydot + a54 * s4.ydot), s4.z, st.mode, o);
      const Eval s6 = evaluate(dae, st.t + hs,
                               y0 + hs * (a61 * k1 + a62 * s2.ydot + a63 * s3.ydot +
                                          a64 * s4.ydot + a65 * s5.ydot),
                               s5.z, st.mode, o);
      const VectorXd y1 = y0 + hs * (a71 * k1 + a73 * s3.ydot + a74 * s4.ydot + a75 * s5.ydot +
                                     a76 * s6.ydot);
      const Eval s7 = evaluate(dae, st.t + hs, y1, s6.z, st.mode, o);
      const VectorXd err = hs * (e1 * k1 + e3 * s3.ydot + e4 * s4.ydot + e5 * s5.ydot +
                                 e6 * s6.ydot + e7 * s7.ydot);
      const double en = error_norm(err, y0, y1, o);
      if (!std::isfinite(en)) throw Error(ErrorKind::StepFailure, "non-finite error estimate");

      if (en <= 1.0) {
        const double res = residual_norm(dae, st.t + hs, y1, s7.z);
        if (res > o.residual_check * (1.0 + s7.z.norm())) {
          std::ostringstream os;
          os << "algebraic residual " << res << " after accepted step at t=" << st.t + hs;
          throw Error(ErrorKind::IndexViolation, os.str());
        }
        StepResult out;
        out.state.t = st.t + hs;
        out.state.diff = y1;
        out.state.alg = s7.z;
        out.state.mode = st.mode;
        out.h_used = h;
        const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
        out.h_next = std::min(h * fac, o.h_max);
        out.stages = {k1, s2.ydot, s3.ydot, s4.ydot, s5.ydot, s6.ydot, s7.ydot};
        out.y0 = y0;
        out.y1 = y1;
        return out;
      }
      h *= std::clamp(0.9 * std::pow(en, -0.2), 0.2, 1.0);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::IndexViolation && h < 10.0 * o.h_min) throw;
      last_failure = e.what();
      last_kind = e.kind();
      h *= 0.25;
    }
  }
}

VectorXd dense_output(const StepResult& s, double theta) {
  const double hs = s.h_used;
  const auto& k = s.stages;
  const VectorXd r2 = s.y1 - s.y0;
  const VectorXd r3 = hs * k[0] - r2;
  const VectorXd r4 = r2 - hs * k[6] - r3;
  const VectorXd r5 = hs * (d1 * k[0] + d3 * k[2] + d4 * k[3] + d5 * k[4] + d6 * k[5] + d7 * k[6]);
  const double th1 = 1.0 - theta;
  return s.y0 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)));
}

IntegrationResult integrate(const SemiExplicitDae& dae, const DaeState& state0, double t_end,
                            const IntegrateOptions& opts) {
  IntegrationResult out;
  DaeState st = state0;
  const std::size_t ne = dae.events.size();

  auto event_value = [&](std::size_t i, double t, const VectorXd& y, const VectorXd& z) {
    return dae.events[i].fn(t, y, z);
  };

  std::vector<double> prev(ne);
  for (std::size_t i = 0; i < ne; ++i) prev[i] = event_value(i, st.t, st.diff, st.alg);

  auto push_sample = [&](double t, const VectorXd& y, const VectorXd& z, int mode) {
    if (opts.record_samples) out.samples.push_back(DaeSample{t, y, z, mode});
  };
  push_sample(st.t, st.diff, st.alg, st.mode);

  double h = opts.h_initial;
  if (h <= 0.0) {
    VectorXd f0(dae.n_diff);
    dae.rhs(st.t, st.diff, st.alg, st.mode, f0);
    double d0 = 0.0, d1n = 0.0;
    for (int i = 0; i < dae.n_diff; ++i) {
      const double sc = opts.step.atol + opts.step.rtol * std::abs(st.diff[i]);
      d0 += std::pow(st.diff[i] / sc, 2);
      d1n += std::pow(f0[i] / sc, 2);
    }
    d0 = std::sqrt(d0 / std::max(dae.n_diff, 1));
    d1n = std::sqrt(d1n / std::max(dae.n_diff, 1));
    h = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
    h = std::min({h, opts.step.h_max, std::abs(t_end - st.t)});
  }

  while (st.t < t_end && out.steps < opts.max_steps) {
    const double h_req = std::min(h, t_end - st.t);
    if (h_req <= 0.0) break;
    StepResult res = step(dae, st, h_req, opts.step);
    ++out.steps;

    // Earliest qualifying event inside the step.
    std::vector<double> end_vals(ne);
    int hit = -1;
    double hit_theta = 2.0;
    int hit_crossing = 0;
    for (std::size_t i = 0; i < ne; ++i) {
      end_vals[i] = event_value(i, res.state.t, res.state.diff, res.state.alg);
      const int s0 = sign_of(prev[i]);
      const int s1 = sign_of(end_vals[i]);
      if (s0 == 0 || s1 == s0) continue;
      const int crossing = s1 == 0 ? -s0 : s1;
      const int want = dae.events[i].direction;
      if (want != 0 && crossing != want) continue;

      double lo = 0.0, hi = 1.0;
      VectorXd z_guess = st.alg;
      while ((hi - lo) * res.h_used > opts.event_tol) {
        const double mid = 0.5 * (lo + hi);
        const VectorXd ym = dense_output(res, mid);
        const double tm = st.t + mid * res.h_used;
        const VectorXd zm = solve_algebraic(dae, tm, ym, z_guess, opts.step);
        z_guess = zm;
        const double gm = event_value(i, tm, ym, zm);
        if (sign_of(gm) == s0) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      if (hi < hit_theta) {
        hit_theta = hi;
        hit = static_cast<int>(i);
        hit_crossing = crossing;
      }
    }

    const double h_after = res.h_next;
    if (hit >= 0) {
      const double h_event = hit_theta * res.h_used;
      StepResult trunc;
      bool exact = false;
      if (h_event > 10.0 * opts.step.h_min && hit_theta < 1.0) {
        trunc = step(dae, st, h_event, opts.step);
        exact = std::abs(trunc.h_used - h_event) <= 1e-12 * std::max(1.0, h_event);
      }
      if (!exact) {
        trunc = res;
        if (hit_theta < 1.0) {
          trunc.state.t = st.t + h_event;
          trunc.state.diff = dense_output(res, hit_theta);
          trunc.state.alg = solve_algebraic(dae, trunc.state.t, trunc.state.diff, st.alg, opts.step);
        }
      }
      // Interior samples up to the event.
      if (opts.record_samples && std::isfinite(opts.max_sample_spacing)) {
        const double span = trunc.state.t - st.t;
        const int pieces = static_cast<int>(std::ceil(span / opts.max_sample_spacing));
        VectorXd zg = st.alg;
        for (int p = 1; p < pieces; ++p) {
          const double th = static_cast<double>(p) / pieces;
          const double tp = st.t + th * span;
          const VectorXd yp = exact ? dense_output(trunc, th) : dense_output(res, th * hit_theta);
          zg = solve_algebraic(dae, tp, yp, zg, opts.step);
          push_sample(tp, yp, zg, st.mode);
        }
      }
      st = trunc.state;
      push_sample(st.t, st.diff, st.alg, st.mode);

      const DaeEvent& ev = dae.events[static_cast<std::size_t>(hit)];
      EventRecord rec;
      rec.index = hit;
      rec.name = ev.name;
      rec.t = st.t;
      rec.crossing = hit_crossing;
      rec.mode_before = st.mode;
      rec.mode_after = st.mode;

      if (ev.action == DaeEvent::Action::Switch) {
        const int new_mode =
            dae.select_mode ? dae.select_mode(st.t, st.diff, st.alg, hit_crossing) : st.mode;
        if (dae.jump) {
          dae.jump(st.t, st.diff, st.alg, st.mode, new_mode);
          st.alg = solve_algebraic(dae, st.t, st.diff, st.alg, opts.step);
        }
        st.mode = new_mode;
        rec.mode_after = new_mode;
        if (opts.record_samples) {
          // Post-switch copy of the event point (mode and jumped state).
          out.samples.push_back(DaeSample{st.t, st.diff, st.alg, st.mode});
        }
      }
      rec.y = st.diff;
      rec.z = st.alg;
      out.events.push_back(rec);

      for (std::size_t i = 0; i < ne; ++i) prev[i] = event_value(i, st.t, st.diff, st.alg);
      // The located event sits on its surface; remember which side we are on.
      prev[static_cast<std::size_t>(hit)] = static_cast<double>(hit_crossing);

      h = std::max(h_after, 10.0 * opts.step.h_min);
      if (ev.action == DaeEvent::Action::Terminate) {
        out.terminated = true;
        break;
      }
      if (opts.on_event && opts.on_event(rec)) {
        out.terminated = true;
        break;
      }
    } else {
      if (opts.record_samples && std::isfinite(opts.max_sample_spacing)) {
        const double span = res.state.t - st.t;
        const int pieces = static_cast<int>(std::ceil(span / opts.max_sample_spacing));
        VectorXd zg = st.alg;
        for (int p = 1; p < pieces; ++p) {
          const double th = static_cast<double>(p) / pieces;
          const double tp = st.t + th * span;
          const VectorXd yp = dense_output(res, th);
          zg = solve_algebraic(dae, tp, yp, zg, opts.step);
          push_sample(tp, yp, zg, st.mode);
        }
      }
      st = res.state;
      push_sample(st.t, st.diff, st.alg, st.mode);
      prev = end_vals;
      h = h_after;
    }
    out.h_last = h;
    if (opts.on_step && opts.on_step(st)) {
      out.terminated = true;
      break;
    }
  }
  out.final_state = st;
  return out;
}

}  // namespace lockin
