#include "lockin/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include "lockin/error.hpp"

namespace lockin {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double pll_decay(const CascadeModel& m) {
  return std::abs(check_oscillatory(m).eigenvalues[0].real());
}

double pll_period(const CascadeModel& m) {
  const double im = std::abs(check_oscillatory(m).eigenvalues[0].imag());
  return im > 0.0 ? 2.0 * std::numbers::pi / im : 1.0 / pll_decay(m);
}

PllState pll_of(const Vec6& s) { return PllState{s[0], s[1]}; }
CcState cc_of(const Vec6& s) { return s.tail<4>(); }

}  // namespace

double default_horizon(const CascadeModel& m, const Gauge& gauge) {
  const double slow = std::max(2.0 / gauge.gamma, 1.0 / pll_decay(m));
  return 50.0 * slow;
}

TrajectoryOutcome simulate(const Vec6& state0, const CascadeModel& m, const Gauge& gauge,
                           const SimOptions& opts) {
  const double horizon = opts.horizon > 0.0 ? opts.horizon : default_horizon(m, gauge);
  const double T = pll_period(m);
  const double dwell = opts.dwell > 0.0 ? opts.dwell : 5.0 * T;
  const double spacing = opts.sample_spacing > 0.0 ? opts.sample_spacing : T / 50.0;

  SemiExplicitDae ode;
  ode.n_diff = 6;
  ode.rhs = [&m](double, const VectorXd& y, const VectorXd&, int, VectorXd& ydot) {
    const Vec6 s = y;
    ydot = eval_rhs_full(pll_of(s), cc_of(s), m);
  };
  DaeEvent slip;
  slip.name = "slip";
  slip.fn = [](double, const VectorXd& y, const VectorXd&) {
    return std::abs(y[0]) - std::numbers::pi;
  };
  slip.direction = 1;
  slip.action = DaeEvent::Action::Terminate;
  ode.events = {slip};

  TrajectoryOutcome out;
  out.min_dtheta = out.max_dtheta = state0[0];
  if (std::abs(state0[0]) >= std::numbers::pi) {
    out.slipped = true;
    return out;
  }

  auto inside_ball = [&](const VectorXd& y) {
    return v_cc(y.tail<4>(), gauge) <= opts.ball_vcc && std::hypot(y[0], y[1]) <= opts.ball_pll;
  };
  double entry = inside_ball(state0) ? 0.0 : -1.0;

  IntegrateOptions io;
  io.step.rtol = opts.rtol;
  io.step.atol = opts.atol;
  io.step.h_max = T / 10.0;
  io.record_samples = opts.record;
  io.max_sample_spacing = spacing;
  io.on_step = [&](const DaeState& st) {
    out.min_dtheta = std::min(out.min_dtheta, st.diff[0]);
    out.max_dtheta = std::max(out.max_dtheta, st.diff[0]);
    if (inside_ball(st.diff)) {
      if (entry < 0.0) entry = st.t;
      if (st.t - entry >= dwell) {
        out.converged = true;
        return true;
      }
    } else {
      entry = -1.0;
    }
    return false;
  };

  DaeState s0;
  s0.diff = state0;
  const IntegrationResult run = integrate(ode, s0, horizon, io);
  out.t_final = run.final_state.t;
  for (const EventRecord& e : run.events) {
    if (e.index == 0) {
      out.slipped = true;
      out.converged = false;
    }
  }
  if (opts.record) {
    out.trajectory.reserve(run.samples.size());
    for (const DaeSample& smp : run.samples) {
      if (!out.trajectory.empty() && smp.t == out.trajectory.back().t) continue;
      out.trajectory.push_back(TrajectorySample{smp.t, Vec6(smp.y)});
    }
  }
  return out;
}

Vec6 sample_inside(const DomainEstimate& est, const CycleFamily& fam, const Gauge& gauge,
                   double inset, int max_rejections, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double w_outer = unit(rng) * est.V_bar_bar;
  const double vcc = (1.0 - inset) * w_outer;
  const double level = (1.0 - inset) * std::max(0.0, phi_at(est, w_outer));

  Vec4 u(normal(rng), normal(rng), normal(rng), normal(rng));
  u.normalize();
  const Vec4 x = ellipsoid_point(gauge, vcc, u);

  // Bounding box of the smallest cycle whose level reaches `level`.
  // Levels above V_bar (inflated fixtures) scale the outer cycle by sqrt(level / V_bar).
  const auto& C = fam.cycles;
  const double stretch = level > C.back().V ? std::sqrt(level / C.back().V) : 1.0;
  const double inner = std::min(level, C.back().V);
  std::size_t k = 1;
  while (k + 1 < C.size() && C[k].V < inner) ++k;
  double lo_t = 0, hi_t = 0, lo_w = 0, hi_w = 0;
  for (const CycleSample& s : C[k].samples) {
    lo_t = std::min(lo_t, s.s.dtheta);
    hi_t = std::max(hi_t, s.s.dtheta);
    lo_w = std::min(lo_w, s.s.domega);
    hi_w = std::max(hi_w, s.s.domega);
  }

  Vec6 out;
  out.tail<4>() = x;
  for (int i = 0; i < max_rejections; ++i) {
    const PllState p{lo_t + unit(rng) * (hi_t - lo_t), lo_w + unit(rng) * (hi_w - lo_w)};
    const auto v = query_vpll(p, fam);
    if (v && *v <= inner) {
      out[0] = stretch * p.dtheta;
      out[1] = stretch * p.domega;
      return out;
    }
  }
  out[0] = 0.0;
  out[1] = 0.0;
  return out;
}

McReport monte_carlo_validate(const DomainEstimate& est, const CycleFamily& fam,
                              const Gauge& gauge, const CascadeModel& m, int N,
                              std::uint64_t seed, const McOptions& opts) {
  McReport rep;
  rep.n = std::max(N, 0);
  if (rep.n == 0) return rep;

  SimOptions sim = opts.sim;
  if (sim.ball_vcc == SimOptions{}.ball_vcc) sim.ball_vcc = opts.ball_vcc_rel * est.V_bar;
  sim.record = true;

  std::vector<McTrajectory> runs(static_cast<std::size_t>(rep.n));
  auto work = [&](std::size_t i) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(i)));
    McTrajectory& r = runs[i];
    r.state0 = sample_inside(est, fam, gauge, opts.inset, opts.max_rejections, rng);
    r.vcc0 = v_cc(cc_of(r.state0), gauge);
    r.vpll0 = query_vpll(pll_of(r.state0), fam).value_or(-1.0);
    r.outcome = simulate(r.state0, m, gauge, sim);
    r.margin = std::numeric_limits<double>::infinity();
    for (const TrajectorySample& smp : r.outcome.trajectory) {
      const double vcc = v_cc(cc_of(smp.state), gauge);
      const auto vpll = query_vpll(pll_of(smp.state), fam);
      if (!vpll || vcc > est.V_bar_bar) {
        r.exited = true;
        continue;
      }
      const double margin = phi_at(est, vcc) - *vpll;
      r.margin = std::min(r.margin, margin);
      if (margin < 0.0) r.exited = true;
    }
    if (!opts.keep_trajectories) {
      r.outcome.trajectory.clear();
      r.outcome.trajectory.shrink_to_fit();
    }
  };

  unsigned nt = opts.threads > 0 ? static_cast<unsigned>(opts.threads)
                                 : std::max(1u, std::thread::hardware_concurrency());
  nt = std::min<unsigned>(nt, static_cast<unsigned>(rep.n));
  if (nt <= 1) {
    for (std::size_t i = 0; i < runs.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(nt);
    for (unsigned t = 0; t < nt; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < runs.size(); i += nt) work(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  rep.worst_margin = std::numeric_limits<double>::infinity();
  for (const McTrajectory& r : runs) {
    if (r.outcome.slipped) {
      ++rep.n_slipped;
    } else if (r.outcome.converged) {
      ++rep.n_converged;
    } else {
      ++rep.n_inconclusive;
    }
    if (r.exited) ++rep.n_exited;
    rep.worst_margin = std::min(rep.worst_margin, r.margin);
  }
  rep.runs = std::move(runs);
  return rep;
}

AuditReport lyapunov_audit(const TrajectoryOutcome& traj, const CycleFamily& fam,
                           const Gauge& gauge, double tol_rel, double tol_abs) {
  AuditReport rep;
  double running = std::numeric_limits<double>::infinity();
  for (const TrajectorySample& smp : traj.trajectory) {
    ++rep.samples;
    const auto vpll = query_vpll(pll_of(smp.state), fam);
    if (!vpll) {
      ++rep.violations;
      rep.worst_excess = std::numeric_limits<double>::infinity();
      continue;
    }
    const double M = std::max(*vpll, v_cc(cc_of(smp.state), gauge));
    if (std::isfinite(running) && M > running * (1.0 + tol_rel) + tol_abs) {
      ++rep.violations;
      rep.worst_excess = std::max(rep.worst_excess, M / running - 1.0);
    }
    running = std::min(running, M);
  }
  return rep;
}

}  // namespace lockin
