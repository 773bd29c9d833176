#include "lockin/family.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "lockin/csv.hpp"
#include "lockin/error.hpp"

namespace lockin {

using namespace comparison;

namespace {

struct Revolution {
  double dtheta_end = 0.0;
  double period = 0.0;
  EventRecord section;
  IntegrationResult run;
};

IntegrateOptions revolution_options(const FamilyOptions& opts, double T_lin, bool record,
                                    double spacing) {
  IntegrateOptions io;
  io.step = opts.step;
  if (!std::isfinite(io.step.h_max)) io.step.h_max = T_lin / 20.0;
  io.record_samples = record;
  io.max_sample_spacing = spacing;
  io.on_event = [](const EventRecord& e) {
    return e.index == kSwitchEvent && e.crossing < 0 && e.y[0] > 0.0;
  };
  return io;
}

Revolution revolve(const ComparisonSystem& sys, double dtheta, Vec2 prime, double T_lin,
                   const FamilyOptions& opts, bool record, double spacing) {
  const DaeState st = comparison_state(sys, PllState{dtheta, 0.0}, prime);
  Revolution r;
  r.run = integrate(sys.dae, st, opts.revolution_time_factor * T_lin,
                    revolution_options(opts, T_lin, record, spacing));
  if (!r.run.events.empty() && r.run.events.back().index == kBandEvent) {
    std::ostringstream os;
    os << "orbit left the band |dtheta| < pi - " << opts.band_margin << " at V=" << sys.V;
    throw Error(ErrorKind::NoCycle, os.str());
  }
  if (!r.run.terminated) {
    std::ostringstream os;
    os << "no return to the section within the time cap at V=" << sys.V;
    throw Error(ErrorKind::NoCycle, os.str());
  }
  r.section = r.run.events.back();
  r.dtheta_end = r.section.y[0];
  r.period = r.run.final_state.t;
  return r;
}

double angle_between(Vec2 a, Vec2 b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0));
}

std::vector<CycleSample> collect_samples(const ComparisonSystem& sys, const IntegrationResult& run) {
  std::vector<CycleSample> out;
  out.reserve(run.samples.size());
  VectorXd ydot(sys.dae.n_diff);
  for (const DaeSample& ds : run.samples) {
    CycleSample cs;
    cs.t = ds.t;
    cs.s = PllState{ds.y[0], ds.y[1]};
    cs.mode = ds.mode;
    sys.dae.rhs(ds.t, ds.y, ds.z, ds.mode, ydot);
    cs.velocity = Vec2(ydot[0], ydot[1]);
    if (sys.with_sensitivity) cs.prime = Vec2(ds.y[2], ds.y[3]);
    // Switch events record the point twice; keep the post-switch copy.
    if (!out.empty() && ds.t == out.back().t) {
      out.back() = cs;
    } else {
      out.push_back(cs);
    }
  }
  return out;
}

double max_switch_jump(const IntegrationResult& run, const CascadeModel& m) {
  double worst = 0.0;
  for (const EventRecord& e : run.events) {
    if (e.index != kSwitchEvent || e.mode_before == e.mode_after) continue;
    const PllState s{e.y[0], e.y[1]};
    const Vec2 a = comparison_velocity(s, comparison_f(e.z, e.mode_before, s, m), m);
    const Vec2 b = comparison_velocity(s, comparison_f(e.z, e.mode_after, s, m), m);
    worst = std::max(worst, angle_between(a, b));
  }
  return worst;
}

// Section-normalized dtheta prime: removes the tangential component so that
// domega' = 0 on the section.
double section_prime(const EventRecord& e, const CascadeModel& m) {
  const PllState s{e.y[0], e.y[1]};
  const Vec2 F = comparison_velocity(s, comparison_f(e.z, e.mode_after, s, m), m);
  return e.y[2] - F.x() * e.y[3] / F.y();
}

bool strictly_inside(const LimitCycle& inner, const LimitCycle& outer) {
  if (inner.is_origin()) return point_in_cycle(PllState{}, outer);
  for (const CycleSample& s : inner.samples) {
    if (!point_in_cycle(s.s, outer)) return false;
  }
  return true;
}

}  // namespace

double linear_period(const CascadeModel& m) {
  const OscillationReport r = check_oscillatory(m);
  const double im = std::abs(r.eigenvalues[0].imag());
  if (im == 0.0) throw Error(ErrorKind::ModelInvalid, "PLL linearization is not oscillatory");
  return 2.0 * std::numbers::pi / im;
}

LimitCycle origin_cycle(const CascadeModel& m) {
  LimitCycle c;
  c.V = 0.0;
  c.period = linear_period(m);
  c.samples.push_back(CycleSample{});
  c.has_primes = true;
  c.has_grad = true;
  return c;
}

LimitCycle find_limit_cycle(double V, double dtheta_start, const Gauge& gauge,
                            const CascadeModel& m, const FamilyOptions& opts) {
  const double T_lin = linear_period(m);
  const ComparisonSystem sys = make_comparison_system(V, gauge, m, opts.band_margin, false, opts.kkt);
  const double band = std::numbers::pi - opts.band_margin;
  const double tol = opts.cycle_tol;

  int revs = 0;
  auto map = [&](double th) {
    if (++revs > opts.revolution_cap) {
      std::ostringstream os;
      os << "return map did not converge within " << opts.revolution_cap
         << " revolutions at V=" << V;
      throw Error(ErrorKind::NoCycle, os.str());
    }
    return revolve(sys, th, Vec2::Zero(), T_lin, opts, false, kUnbounded);
  };

  double th0 = dtheta_start;
  Revolution r0 = map(th0);
  double P0 = r0.dtheta_end;
  double period = r0.period;
  double th_star = th0;
  double slope = std::numeric_limits<double>::quiet_NaN();
  bool converged = std::abs(P0 - th0) < tol;

  if (!converged) {
    double th1 = P0;
    Revolution r1 = map(th1);
    double P1 = r1.dtheta_end;
    period = r1.period;
    while (true) {
      const double d1 = P1 - th1;
      if (th1 != th0) slope = (P1 - P0) / (th1 - th0);
      if (std::abs(d1) < tol) {
        th_star = th1;
        converged = true;
        break;
      }
      double th2 = P1;
      if (std::isfinite(slope) && slope < 1.0 - 1e-9) {
        const double cand = th1 + d1 / (1.0 - slope);
        if (cand > 0.0 && cand < band && std::abs(cand - th1) <= 1e3 * std::abs(d1)) th2 = cand;
      }
      th0 = th1;
      P0 = P1;
      th1 = th2;
      const Revolution r2 = map(th1);
      P1 = r2.dtheta_end;
      period = r2.period;
    }
  }

  if (!std::isfinite(slope)) {
    // Converged on the first revolution; probe the slope once.
    const double eps = std::max(1e-6 * std::abs(th_star), 100.0 * tol);
    const Revolution rp = map(th_star + eps);
    slope = (rp.dtheta_end - P0) / eps;
  }
  if (!(slope < 1.0)) {
    std::ostringstream os;
    os << "fixed point at V=" << V << " is not attracting (return-map slope " << slope << ")";
    throw Error(ErrorKind::NoCycle, os.str());
  }

  const double spacing = period / std::max(opts.samples_per_cycle, 16);
  const Revolution fin = revolve(sys, th_star, Vec2::Zero(), T_lin, opts, true, spacing);

  LimitCycle c;
  c.V = V;
  c.period = fin.period;
  c.section_dtheta = th_star;
  c.multiplier = slope;
  c.revolutions = revs + 1;
  c.closure = std::abs(fin.dtheta_end - th_star);
  c.switch_tangent_jump = max_switch_jump(fin.run, m);
  c.samples = collect_samples(sys, fin.run);
  index_cycle(c);
  return c;
}

void attach_sensitivity(LimitCycle& cycle, const Gauge& gauge, const CascadeModel& m,
                        const FamilyOptions& opts) {
  if (cycle.is_origin()) {
    cycle.has_primes = true;
    return;
  }
  const double T_lin = linear_period(m);
  const ComparisonSystem sys =
      make_comparison_system(cycle.V, gauge, m, opts.band_margin, true, opts.kkt);
  const double th = cycle.section_dtheta;

  // The section prime after one revolution is affine in the starting prime:
  // q(p) = q0 + mult * p, with mult the return-map slope.
  const double q0 = section_prime(revolve(sys, th, Vec2(0.0, 0.0), T_lin, opts, false, kUnbounded).section, m);
  const double q1 = section_prime(revolve(sys, th, Vec2(1.0, 0.0), T_lin, opts, false, kUnbounded).section, m);
  const double mult = q1 - q0;
  if (!std::isfinite(mult) || std::abs(1.0 - mult) < 1e-9) {
    std::ostringstream os;
    os << "prime return map has multiplier " << mult << " at V=" << cycle.V;
    throw Error(ErrorKind::SensitivityDiverged, os.str());
  }
  const double p_star = q0 / (1.0 - mult);

  const double spacing = cycle.period / std::max(opts.samples_per_cycle, 16);
  const Revolution fin = revolve(sys, th, Vec2(p_star, 0.0), T_lin, opts, true, spacing);
  const double q_star = section_prime(fin.section, m);
  if (!(std::abs(q_star - p_star) <= opts.sens_tol * std::max(1.0, std::abs(p_star)))) {
    std::ostringstream os;
    os << "primes not periodic at V=" << cycle.V << ": " << p_star << " -> " << q_star;
    throw Error(ErrorKind::SensitivityDiverged, os.str());
  }

  cycle.samples = collect_samples(sys, fin.run);
  index_cycle(cycle);
  cycle.period = fin.period;
  cycle.section_prime = p_star;
  cycle.has_primes = true;
  cycle.has_grad = false;
}

void attach_gradient(LimitCycle& cycle, const FamilyOptions& opts) {
  if (cycle.is_origin()) {
    cycle.has_grad = true;
    return;
  }
  if (!cycle.has_primes) throw Error(ErrorKind::OutOfRange, "gradient needs primes");
  auto& S = cycle.samples;
  const std::size_t n = S.size();
  std::vector<bool> ok(n, false);
  int bad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 v = S[i].velocity;
    const Vec2 p = S[i].prime;
    const double det = v.x() * p.y() - v.y() * p.x();
    const double rel = std::abs(det) / (v.norm() * p.norm());
    if (std::isfinite(rel) && rel >= opts.det_floor) {
      S[i].grad = Vec2(-v.y(), v.x()) / det;
      S[i].grad_filled = false;
      ok[i] = true;
    } else {
      ++bad;
    }
  }
  cycle.degenerate_samples = bad;
  if (n == 0 || bad > opts.max_degenerate_fraction * static_cast<double>(n) || bad == static_cast<int>(n)) {
    std::ostringstream os;
    os << bad << " of " << n << " gradient solves degenerate at V=" << cycle.V;
    throw Error(ErrorKind::GradientDegenerate, os.str());
  }

  if (bad > 0) {
    // Cumulative arc length around the closed curve.
    std::vector<double> arc(n + 1, 0.0);
    for (std::size_t i = 1; i <= n; ++i) {
      const PllState a = S[i - 1].s;
      const PllState b = S[i % n].s;
      arc[i] = arc[i - 1] + std::hypot(b.dtheta - a.dtheta, b.domega - a.domega);
    }
    const double L = arc[n];
    for (std::size_t i = 0; i < n; ++i) {
      if (ok[i]) continue;
      std::size_t lo = i, hi = i;
      std::size_t steps = 0;
      do { lo = (lo + n - 1) % n; } while (!ok[lo] && ++steps < n);
      steps = 0;
      do { hi = (hi + 1) % n; } while (!ok[hi] && ++steps < n);
      double dl = arc[i] - arc[lo];
      if (dl < 0.0) dl += L;
      double dh = arc[hi] - arc[i];
      if (dh < 0.0) dh += L;
      const double w = (dl + dh) > 0.0 ? dl / (dl + dh) : 0.5;
      S[i].grad = (1.0 - w) * S[lo].grad + w * S[hi].grad;
      S[i].grad_filled = true;
    }
  }
  cycle.has_grad = true;
}

CycleFamily continue_family(const Gauge& gauge, const CascadeModel& m, const FamilyOptions& opts) {
  CycleFamily fam;
  fam.band_margin = opts.band_margin;
  fam.V_safe = singularity_clearance(gauge, m, opts.eps_margin);
  fam.cycles.push_back(origin_cycle(m));
  const double V_cap = std::min(opts.V_max, fam.V_safe);

  LimitCycle first;
  bool have_first = false;
  if (opts.V_seed > 0.0) {
    try {
      first = find_limit_cycle(std::min(opts.V_seed, V_cap), opts.seed_radius, gauge, m, opts);
      have_first = true;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoCycle) throw;
    }
  } else {
    // Cycle swing grows like sqrt(V) for small V; rescale until the swing
    // is close to seed_radius.
    double V_try = std::min(1.0, 0.5 * V_cap);
    for (int attempt = 0; attempt < 12; ++attempt) {
      try {
        first = find_limit_cycle(V_try, opts.seed_radius, gauge, m, opts);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NoCycle) throw;
        V_try *= 0.01;
        continue;
      }
      have_first = true;
      const double r = max_abs_dtheta(first);
      const double ratio = opts.seed_radius / r;
      if (std::abs(std::log(ratio)) < std::log(1.5)) break;
      V_try = std::min(V_try * ratio * ratio, 0.5 * V_cap);
    }
  }
  if (!have_first) {
    throw Error(ErrorKind::EmptyFamily, "no limit cycle even at the smallest level");
  }
  if (!strictly_inside(fam.cycles[0], first)) {
    throw Error(ErrorKind::EmptyFamily, "first cycle does not enclose the origin");
  }
  fam.V_seed = first.V;
  fam.cycles.push_back(std::move(first));

  double dV = fam.V_seed * opts.max_step_fraction;
  fam.stop_reason = "step below V_step_min";
  while (static_cast<int>(fam.cycles.size()) < opts.max_cycles + 1) {
    const LimitCycle& last = fam.cycles.back();
    if (dV < opts.V_step_min * last.V) break;
    double V_next = last.V + dV;
    if (V_next >= V_cap) {
      if (last.V >= V_cap * (1.0 - 1e-12)) {
        fam.stop_reason = "reached V_max or singularity clearance";
        break;
      }
      V_next = V_cap;
    }
    const double guess = last.section_dtheta * std::sqrt(V_next / last.V);
    try {
      LimitCycle c = find_limit_cycle(V_next, std::min(guess, std::numbers::pi - 2.0 * opts.band_margin),
                                      gauge, m, opts);
      if (!strictly_inside(last, c)) {
        dV *= 0.5;
        continue;
      }
      fam.cycles.push_back(std::move(c));
      dV = std::min(dV * opts.step_growth, opts.max_step_fraction * V_next);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoCycle) throw;
      dV *= 0.5;
    }
  }
  if (static_cast<int>(fam.cycles.size()) >= opts.max_cycles + 1) fam.stop_reason = "max_cycles";
  fam.V_bar = fam.cycles.back().V;
  return fam;
}

CycleFamily build_family(const Gauge& gauge, const CascadeModel& m, const FamilyOptions& opts) {
  CycleFamily fam = continue_family(gauge, m, opts);
  for (LimitCycle& c : fam.cycles) {
    attach_sensitivity(c, gauge, m, opts);
    attach_gradient(c, opts);
  }
  return fam;
}

double signed_area(const LimitCycle& c) {
  const auto& S = c.samples;
  double a = 0.0;
  for (std::size_t i = 0; i < S.size(); ++i) {
    const PllState p = S[i].s;
    const PllState q = S[(i + 1) % S.size()].s;
    a += p.dtheta * q.domega - q.dtheta * p.domega;
  }
  return 0.5 * a;
}

void index_cycle(LimitCycle& c) {
  c.polar_angle.clear();
  c.star = false;
  const auto& S = c.samples;
  if (S.size() < 3) return;
  c.polar_angle.reserve(S.size());
  double prev = std::atan2(S[0].s.domega, S[0].s.dtheta);
  c.polar_angle.push_back(prev);
  bool monotone = true;
  for (std::size_t i = 1; i < S.size(); ++i) {
    double a = std::atan2(S[i].s.domega, S[i].s.dtheta);
    while (a > prev) a -= 2.0 * std::numbers::pi;
    while (a <= prev - 2.0 * std::numbers::pi) a += 2.0 * std::numbers::pi;
    // A step of more than half a turn is a reversal, not progress.
    if (prev - a >= std::numbers::pi) monotone = false;
    c.polar_angle.push_back(a);
    prev = a;
  }
  const double total = c.polar_angle.front() - c.polar_angle.back();
  // The stored revolution may overshoot its start by the closure gap.
  c.star = monotone && total < 2.0 * std::numbers::pi + 1e-6 && total > 1.5 * std::numbers::pi;
}

namespace {

// Edge (i, i+1 mod n) of a star-shaped cycle crossed by the ray at angle phi.
std::size_t star_edge(const LimitCycle& c, double phi) {
  const auto& A = c.polar_angle;
  const double a0 = A.front();
  const double two_pi = 2.0 * std::numbers::pi;
  while (phi > a0) phi -= two_pi;
  while (phi <= a0 - two_pi) phi += two_pi;
  if (phi < A.back()) return A.size() - 1;  // closing edge
  // First index with A[i] < phi; the edge is (i - 1, i).
  auto it = std::lower_bound(A.begin(), A.end(), phi, [](double a, double v) { return a >= v; });
  const std::size_t i = static_cast<std::size_t>(it - A.begin());
  return i == 0 ? 0 : i - 1;
}

double edge_ray_t(Vec2 a, Vec2 b, Vec2 d) {
  const Vec2 e = b - a;
  const double den = d.x() * e.y() - d.y() * e.x();
  if (den == 0.0) return std::max(a.norm(), b.norm());
  return (a.x() * e.y() - a.y() * e.x()) / den;
}

double star_ray_distance(PllState p, const LimitCycle& c) {
  const double r = std::hypot(p.dtheta, p.domega);
  const Vec2 d(p.dtheta / r, p.domega / r);
  const std::size_t i = star_edge(c, std::atan2(p.domega, p.dtheta));
  const auto& S = c.samples;
  const std::size_t j = (i + 1) % S.size();
  return edge_ray_t(Vec2(S[i].s.dtheta, S[i].s.domega), Vec2(S[j].s.dtheta, S[j].s.domega), d);
}

}  // namespace

bool point_in_cycle(PllState p, const LimitCycle& c) {
  if (c.is_origin()) return p.dtheta == 0.0 && p.domega == 0.0;
  if (c.star) {
    const double r = std::hypot(p.dtheta, p.domega);
    if (r == 0.0) return true;
    return r < star_ray_distance(p, c);
  }
  const auto& S = c.samples;
  bool inside = false;
  for (std::size_t i = 0, j = S.size() - 1; i < S.size(); j = i++) {
    const double xi = S[i].s.dtheta, yi = S[i].s.domega;
    const double xj = S[j].s.dtheta, yj = S[j].s.domega;
    if ((yi > p.domega) != (yj > p.domega)) {
      const double x_cross = xj + (p.domega - yj) * (xi - xj) / (yi - yj);
      if (p.dtheta < x_cross) inside = !inside;
    }
  }
  return inside;
}

double ray_distance(PllState p, const LimitCycle& c) {
  if (c.is_origin()) return 0.0;
  const double r = std::hypot(p.dtheta, p.domega);
  if (r == 0.0) return 0.0;
  if (c.star) return star_ray_distance(p, c);
  const Vec2 d(p.dtheta / r, p.domega / r);
  const auto& S = c.samples;
  double best = -1.0;
  for (std::size_t i = 0, j = S.size() - 1; i < S.size(); j = i++) {
    const Vec2 a(S[j].s.dtheta, S[j].s.domega);
    const Vec2 b(S[i].s.dtheta, S[i].s.domega);
    const Vec2 e = b - a;
    // a + u e = t d
    const double den = d.x() * e.y() - d.y() * e.x();
    if (den == 0.0) continue;
    const double t = (a.x() * e.y() - a.y() * e.x()) / den;
    const double u = (a.x() * d.y() - a.y() * d.x()) / den;
    if (u >= 0.0 && u <= 1.0 && t > 0.0) best = std::max(best, t);
  }
  return best;
}

NestingReport check_nesting(const CycleFamily& fam) {
  NestingReport r;
  for (std::size_t k = 0; k + 1 < fam.cycles.size(); ++k) {
    ++r.pairs;
    if (!strictly_inside(fam.cycles[k], fam.cycles[k + 1])) {
      ++r.violations;
      if (r.first_violation < 0) r.first_violation = static_cast<int>(k);
    }
  }
  return r;
}

std::optional<double> query_vpll(PllState p, const CycleFamily& fam) {
  if (p.dtheta == 0.0 && p.domega == 0.0) return 0.0;
  const auto& C = fam.cycles;
  if (C.size() < 2) return std::nullopt;
  const double r = std::hypot(p.dtheta, p.domega);
  if (!point_in_cycle(p, C.back())) {
    // Lambda(V_bar) is closed: accept the outer curve itself.
    if (!C.back().star || r > ray_distance(p, C.back()) * (1.0 + 1e-12)) return std::nullopt;
    return C.back().V;
  }
  std::size_t lo = 0, hi = C.size() - 1;  // outside lo, inside hi
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    if (point_in_cycle(p, C[mid])) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  const double r_lo = ray_distance(p, C[lo]);
  const double r_hi = ray_distance(p, C[hi]);
  if (!(r_hi > r_lo)) return C[hi].V;
  if (lo == 0) {
    // Cycle radius grows like sqrt(V) near the focus.
    const double q = std::min(r / r_hi, 1.0);
    return C[hi].V * q * q;
  }
  const double w = std::clamp((r - r_lo) / (r_hi - r_lo), 0.0, 1.0);
  return C[lo].V + w * (C[hi].V - C[lo].V);
}

double max_abs_dtheta(const LimitCycle& c) {
  double m = 0.0;
  for (const CycleSample& s : c.samples) m = std::max(m, std::abs(s.s.dtheta));
  return m;
}

void write_family_csv(std::ostream& os, const CycleFamily& fam) {
  write_csv_header(os, {"V", "t", "dtheta", "domega", "dtheta_prime", "domega_prime", "grad_1",
                        "grad_2"});
  for (const LimitCycle& c : fam.cycles) {
    for (const CycleSample& s : c.samples) {
      write_csv_row(os, {c.V, s.t, s.s.dtheta, s.s.domega, s.prime.x(), s.prime.y(), s.grad.x(),
                         s.grad.y()});
    }
  }
}

CycleFamily read_family_csv(std::istream& is) {
  const auto rows = read_csv_rows(is, {"V", "t", "dtheta", "domega", "dtheta_prime",
                                       "domega_prime", "grad_1", "grad_2"});
  CycleFamily fam;
  for (const auto& r : rows) {
    if (fam.cycles.empty() || fam.cycles.back().V != r[0]) {
      if (!fam.cycles.empty() && r[0] < fam.cycles.back().V) {
        throw Error(ErrorKind::ConfigInvalid, "family CSV levels are not increasing");
      }
      LimitCycle c;
      c.V = r[0];
      c.has_primes = true;
      c.has_grad = true;
      fam.cycles.push_back(std::move(c));
    }
    CycleSample smp;
    smp.t = r[1];
    smp.s = PllState{r[2], r[3]};
    smp.prime = Vec2(r[4], r[5]);
    smp.grad = Vec2(r[6], r[7]);
    fam.cycles.back().samples.push_back(smp);
  }
  if (fam.cycles.size() < 2 || !fam.cycles.front().is_origin()) {
    throw Error(ErrorKind::EmptyFamily, "family CSV holds no cycles");
  }
  for (LimitCycle& c : fam.cycles) {
    c.period = c.samples.back().t - c.samples.front().t;
    if (!c.is_origin()) index_cycle(c);
  }
  fam.V_bar = fam.cycles.back().V;
  fam.V_seed = fam.cycles[1].V;
  fam.stop_reason = "loaded";
  return fam;
}

}  // namespace lockin
