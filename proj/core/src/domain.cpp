#include "lockin/domain.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "lockin/csv.hpp"
#include "lockin/error.hpp"

namespace lockin {

DomainEstimate trivial_estimate(double V_bar) {
  DomainEstimate e;
  e.V_bar = V_bar;
  e.V_bar_bar = V_bar;
  e.vcc = {0.0, V_bar};
  e.phi = {V_bar, V_bar};
  return e;
}

DomainEstimate solve_phi(const GrowthBound& gb, double gamma, double V_bar,
                         const PhiOptions& opts) {
  if (!(gamma > 0.0) || !(V_bar > 0.0)) {
    throw Error(ErrorKind::OutOfRange, "solve_phi needs gamma > 0 and V_bar > 0");
  }
  const double w_end = gb.vcc_grid.back();
  if (!(w_end > V_bar)) {
    throw Error(ErrorKind::GridExhausted, "V^CC grid does not extend beyond V_bar");
  }

  SemiExplicitDae ode;
  ode.n_diff = 1;
  // Stays true while every evaluation at the cap wanted to rise above V_bar.
  bool clamped = true;
  ode.rhs = [&gb, gamma, V_bar, &clamped](double V, const VectorXd& y, const VectorXd&, int,
                                          VectorXd& ydot) {
    const double phi = std::clamp(y[0], 0.0, V_bar);
    double d = -eval_F_padded(phi, V, gb) / (gamma * V);
    if (y[0] >= V_bar && d > 0.0) {
      d = 0.0;
    } else {
      clamped = false;
    }
    ydot.resize(1);
    ydot[0] = d;
  };
  DaeEvent zero;
  zero.name = "phi";
  zero.fn = [](double, const VectorXd& y, const VectorXd&) { return y[0]; };
  zero.direction = -1;
  zero.action = DaeEvent::Action::Terminate;
  ode.events = {zero};

  IntegrateOptions io;
  io.step.rtol = opts.rtol;
  io.step.atol = opts.atol * V_bar;
  io.step.h_min = 1e-14 * V_bar;
  io.step.h_max = opts.max_spacing_fraction * V_bar;
  io.record_samples = true;
  io.max_sample_spacing = opts.max_spacing_fraction * V_bar;
  io.h_initial = 1e-3 * V_bar;

  DaeState s0;
  s0.t = V_bar;
  s0.diff = VectorXd::Constant(1, V_bar);
  const IntegrationResult run = integrate(ode, s0, w_end, io);

  DomainEstimate e;
  e.V_bar = V_bar;
  e.vcc.push_back(0.0);
  e.phi.push_back(V_bar);
  double running = V_bar;
  for (const DaeSample& smp : run.samples) {
    running = std::min(running, std::clamp(smp.y[0], 0.0, V_bar));
    if (smp.t <= e.vcc.back()) {
      e.phi.back() = std::min(e.phi.back(), running);
      continue;
    }
    e.vcc.push_back(smp.t);
    e.phi.push_back(running);
  }

  if (!run.terminated) {
    if (clamped && running >= V_bar * (1.0 - 1e-12)) {
      throw Error(ErrorKind::NoExtension, "Phi stays at V_bar: growth bound is negative");
    }
    std::ostringstream os;
    os << "Phi only fell to " << running << " before the V^CC grid ended at " << w_end;
    throw Error(ErrorKind::GridExhausted, os.str());
  }
  e.V_bar_bar = run.final_state.t;
  e.vcc.back() = e.V_bar_bar;
  e.phi.back() = 0.0;
  return e;
}

DomainRun estimate_domain(const CycleFamily& fam, const Gauge& gauge, const CascadeModel& m,
                          GrowthOptions gopts, const PhiOptions& popts, int max_extensions) {
  const double cap = 0.99 * fam.V_safe / fam.V_bar;
  DomainRun r;
  while (true) {
    gopts.vcc_max_factor = std::min(gopts.vcc_max_factor, cap);
    r.growth = tabulate(fam, gauge, m, default_vcc_grid(fam.V_bar, gopts), gopts);
    try {
      r.estimate = solve_phi(r.growth, gauge.gamma, fam.V_bar, popts);
      return r;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::GridExhausted || r.extensions >= max_extensions ||
          gopts.vcc_max_factor >= cap) {
        throw;
      }
    }
    ++r.extensions;
    gopts.vcc_max_factor *= 10.0;
    gopts.vcc_levels += 10;
  }
}

double phi_at(const DomainEstimate& est, double vcc) {
  if (vcc <= est.V_bar) return est.phi.empty() ? est.V_bar : est.phi.front();
  if (vcc > est.V_bar_bar) return -1.0;
  const auto& X = est.vcc;
  auto it = std::upper_bound(X.begin(), X.end(), vcc);
  if (it == X.end()) return est.phi.back();
  const std::size_t j = static_cast<std::size_t>(it - X.begin());
  const std::size_t i = j - 1;
  const double a = (vcc - X[i]) / (X[j] - X[i]);
  return (1.0 - a) * est.phi[i] + a * est.phi[j];
}

bool contains_levels(double vpll, double vcc, const DomainEstimate& est) {
  if (vcc > est.V_bar_bar || vpll > est.V_bar) return false;
  return vpll <= phi_at(est, vcc);
}

bool contains(PllState s, const CcState& x, const DomainEstimate& est, const CycleFamily& fam,
              const Gauge& gauge) {
  const double vcc = v_cc(x, gauge);
  if (vcc > est.V_bar_bar) return false;
  const auto vpll = query_vpll(s, fam);
  if (!vpll) return false;
  return contains_levels(*vpll, vcc, est);
}

DomainEstimate inflate(const DomainEstimate& est, double vcc_factor, double phi_factor) {
  DomainEstimate e = est;
  e.V_bar_bar = est.V_bar + vcc_factor * (est.V_bar_bar - est.V_bar);
  for (std::size_t i = 0; i < e.vcc.size(); ++i) {
    if (e.vcc[i] > est.V_bar) e.vcc[i] = est.V_bar + vcc_factor * (e.vcc[i] - est.V_bar);
    e.phi[i] = phi_factor * e.phi[i];
  }
  return e;
}

void write_domain_csv(std::ostream& os, const DomainEstimate& est) {
  write_csv_header(os, {"vcc", "phi"});
  for (std::size_t i = 0; i < est.vcc.size(); ++i) write_csv_row(os, {est.vcc[i], est.phi[i]});
}

DomainEstimate read_domain_csv(std::istream& is) {
  const auto rows = read_csv_rows(is, {"vcc", "phi"});
  if (rows.size() < 2) throw Error(ErrorKind::ConfigInvalid, "domain CSV needs two rows");
  DomainEstimate e;
  for (const auto& r : rows) {
    if (!e.vcc.empty() && !(r[0] > e.vcc.back())) {
      throw Error(ErrorKind::ConfigInvalid, "domain CSV vcc is not increasing");
    }
    e.vcc.push_back(r[0]);
    e.phi.push_back(r[1]);
  }
  e.V_bar = e.phi.front();
  e.V_bar_bar = e.vcc.back();
  return e;
}

}  // namespace lockin
