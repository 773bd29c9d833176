#include "commands.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "lockin/csv.hpp"
#include "lockin/error.hpp"

namespace lockin::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt_complex(std::complex<double> z) {
  std::ostringstream os;
  os << fmt17(z.real()) << (z.imag() < 0 ? " - " : " + ") << fmt17(std::abs(z.imag())) << "i";
  return os.str();
}

// Flat JSON object with fixed key order; doubles in 17-digit form.
class JsonWriter {
 public:
  void num(const std::string& k, double v) { add(k, std::isfinite(v) ? fmt17(v) : "null"); }
  void integer(const std::string& k, long long v) { add(k, std::to_string(v)); }
  void str(const std::string& k, const std::string& v) { add(k, nlohmann::json(v).dump()); }
  void boolean(const std::string& k, bool v) { add(k, v ? "true" : "false"); }

  void write(const fs::path& path) const {
    std::ofstream os(path, std::ios::binary);
    os << "{\n";
    for (std::size_t i = 0; i < items_.size(); ++i) {
      os << "  " << nlohmann::json(items_[i].first).dump() << ": " << items_[i].second
         << (i + 1 < items_.size() ? ",\n" : "\n");
    }
    os << "}\n";
    if (!os) throw Error(ErrorKind::ConfigInvalid, "cannot write " + path.string());
  }

 private:
  void add(const std::string& k, std::string v) { items_.emplace_back(k, std::move(v)); }
  std::vector<std::pair<std::string, std::string>> items_;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::ConfigInvalid, "cannot write " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw Error(ErrorKind::ConfigInvalid,
                "missing " + path.string() + " (run `lockin estimate` first)");
  }
  return is;
}

// Runs one pipeline stage; library errors come back tagged with the stage.
template <class F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("[") + name + "] " + e.what());
  }
}

struct Loaded {
  CascadeModel model;
  Gauge gauge;
  CycleFamily family;
  DomainEstimate estimate;
};

Loaded load_artifacts(const RunConfig& cfg) {
  CascadeModel m = stage("model", [&] { return build_model(cfg); });
  Gauge g = stage("gauge", [&] { return build_gauge(m.A(), cfg.gauge_margin); });
  CycleFamily fam = stage("load", [&] {
    auto is = open_in(cfg.output / "family.csv");
    return read_family_csv(is);
  });
  DomainEstimate est = stage("load", [&] {
    auto is = open_in(cfg.output / "domain.csv");
    return read_domain_csv(is);
  });
  return Loaded{std::move(m), g, std::move(fam), std::move(est)};
}

void write_trajectory_csv(const fs::path& path, const TrajectoryOutcome& o) {
  auto os = open_out(path);
  write_csv_header(os, {"t", "dtheta", "domega", "x1", "x2", "x3", "x4"});
  for (const TrajectorySample& s : o.trajectory) {
    const Vec6& y = s.state;
    write_csv_row(os, {s.t, y[0], y[1], y[2], y[3], y[4], y[5]});
  }
}

}  // namespace

int cmd_check(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  bool pass = true;
  Mat4 A;
  if (cfg.plugin) {
    A = cfg.plugin->A;
  } else {
    try {
      A = derive_inverter(cfg.params).A;
    } catch (const Error& e) {
      err << "check: " << e.what() << "\n";
      return kAssumptions;
    }
  }
  out << "model: " << cfg.version() << "\n";
  out << "eig(A):\n";
  for (const auto& ev : cc_eigenvalues(A)) out << "  " << fmt_complex(ev) << "\n";
  if (!is_hurwitz(A)) {
    err << "FAIL: current-loop matrix A is not Hurwitz (max Re eig = "
        << fmt17(spectral_abscissa(A)) << ")\n";
    return kAssumptions;
  }
  out << "A is Hurwitz\n";

  std::optional<CascadeModel> model;
  try {
    model.emplace(build_model(cfg));
  } catch (const Error& e) {
    err << "FAIL: " << e.what() << "\n";
    return kAssumptions;
  }
  const Mat2 J = pll_jacobian(*model);
  const OscillationReport osc = check_oscillatory(J);
  out << "eig(PLL Jacobian):\n";
  for (const auto& ev : osc.eigenvalues) out << "  " << fmt_complex(ev) << "\n";
  if (!osc.pass) {
    const bool real = osc.eigenvalues[0].imag() == 0.0;
    err << "FAIL: PLL linearization is "
        << (real ? "non-oscillatory (real eigenvalues)" : "not stable (Re eig >= 0)") << "\n";
    pass = false;
  } else {
    out << "PLL linearization is a stable focus\n";
  }
  out << "gradient sign: " << to_string(model->gradient_sign()) << "\n";

  try {
    const Gauge g = build_gauge(A, cfg.gauge_margin);
    out << "gamma: " << fmt17(g.gamma) << "\n";
    out << "V_safe: " << fmt17(singularity_clearance(g, *model, cfg.eps_margin)) << "\n";
  } catch (const Error& e) {
    err << "FAIL: " << e.what() << "\n";
    pass = false;
  }
  out << "check: " << (pass ? "pass" : "fail") << "\n";
  return pass ? kOk : kAssumptions;
}

int cmd_estimate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  {
    std::ostringstream quiet;
    const int rc = cmd_check(cfg, quiet, err);
    if (rc != kOk) return rc;
  }
  try {
    const CascadeModel m = stage("model", [&] { return build_model(cfg); });
    const Gauge g = stage("gauge", [&] { return build_gauge(m.A(), cfg.gauge_margin); });
    const CycleFamily fam = stage("family", [&] { return build_family(g, m, cfg.family); });
    out << "family: " << fam.cycles.size() - 1 << " cycles, V_bar " << fmt17(fam.V_bar)
        << ", max |dtheta| " << fmt17(max_abs_dtheta(fam.cycles.back()) / std::numbers::pi)
        << " pi (" << fam.stop_reason << ")\n";
    const DomainRun run = stage("domain", [&] { return estimate_domain(fam, g, m, cfg.growth); });
    out << "domain: V_bar_bar " << fmt17(run.estimate.V_bar_bar) << " after "
        << run.extensions << " grid extensions\n";

    fs::create_directories(cfg.output);
    {
      auto os = open_out(cfg.output / "family.csv");
      write_family_csv(os, fam);
    }
    {
      auto os = open_out(cfg.output / "growth.csv");
      write_growth_csv(os, run.growth);
    }
    {
      auto os = open_out(cfg.output / "domain.csv");
      write_domain_csv(os, run.estimate);
    }
    const NestingReport nest = check_nesting(fam);
    JsonWriter js;
    js.integer("schema_version", kSchemaVersion);
    js.str("version", cfg.version());
    js.num("V_bar", fam.V_bar);
    js.num("V_bar_bar", run.estimate.V_bar_bar);
    js.num("gamma", g.gamma);
    js.num("V_safe", fam.V_safe);
    js.integer("cycles", static_cast<long long>(fam.cycles.size()) - 1);
    js.num("max_abs_dtheta", max_abs_dtheta(fam.cycles.back()));
    js.str("stop_reason", fam.stop_reason);
    js.integer("nesting_violations", nest.violations);
    js.integer("grid_extensions", run.extensions);
    js.write(cfg.output / "summary.json");
    out << "wrote " << cfg.output.string() << "/{family,growth,domain}.csv, summary.json\n";
    return kOk;
  } catch (const Error& e) {
    err << "estimate: " << e.what() << "\n";
    return e.kind() == ErrorKind::ConfigInvalid ? kAssumptions : kNumerical;
  }
}

int cmd_validate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.N == 0) {
    JsonWriter js;
    js.integer("N", 0);
    js.boolean("pass", true);
    fs::create_directories(cfg.output);
    js.write(cfg.output / "validation.json");
    out << "validate: N = 0, nothing to do\n";
    return kOk;
  }
  try {
    const Loaded L = load_artifacts(cfg);
    DomainEstimate est = L.estimate;
    if (cfg.phi_inflation != 1.0) {
      est = inflate(est, 1.0, cfg.phi_inflation);
      out << "fixture: Phi inflated x" << cfg.phi_inflation << "\n";
    }
    McOptions mo;
    mo.inset = cfg.inset;
    mo.sim.horizon = cfg.horizon;
    mo.keep_trajectories = cfg.dump_trajectories;
    const McReport mc = stage("validate", [&] {
      return monte_carlo_validate(est, L.family, L.gauge, L.model, cfg.N, cfg.seed, mo);
    });

    // Trivial square: max(V^PLL, V^CC) may not grow along any trajectory.
    McOptions ao = mo;
    ao.keep_trajectories = true;
    const McReport sq = stage("audit", [&] {
      return monte_carlo_validate(trivial_estimate(L.family.V_bar), L.family, L.gauge, L.model,
                                  cfg.audit_N, cfg.seed ^ 0xa5a5a5a5ULL, ao);
    });
    int audit_violations = 0, audit_unconverged = 0;
    double worst_excess = 0.0;
    for (const McTrajectory& r : sq.runs) {
      const AuditReport a = lyapunov_audit(r.outcome, L.family, L.gauge);
      audit_violations += a.violations;
      worst_excess = std::max(worst_excess, a.worst_excess);
      if (!r.outcome.converged) ++audit_unconverged;
    }

    if (cfg.dump_trajectories) {
      const fs::path dir = cfg.output / "trajectories";
      fs::create_directories(dir);
      for (std::size_t i = 0; i < mc.runs.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "mc_%05zu.csv", i);
        write_trajectory_csv(dir / name, mc.runs[i].outcome);
      }
    }

    const double inconclusive_rate = static_cast<double>(mc.n_inconclusive) / mc.n;
    const bool pass = mc.n_slipped == 0 && mc.n_exited == 0 && inconclusive_rate < 0.01 &&
                      audit_violations == 0 && audit_unconverged == 0;
    out << "monte carlo: N " << mc.n << ", converged " << mc.n_converged << ", slipped "
        << mc.n_slipped << ", inconclusive " << mc.n_inconclusive << ", left estimate "
        << mc.n_exited << "\n";
    out << "audit: " << sq.n << " trajectories, " << audit_violations << " violations, "
        << audit_unconverged << " not converged\n";

    JsonWriter js;
    js.str("version", cfg.version());
    js.integer("N", mc.n);
    js.integer("seed", static_cast<long long>(cfg.seed));
    js.num("phi_inflation", cfg.phi_inflation);
    js.num("inset", cfg.inset);
    js.integer("converged", mc.n_converged);
    js.integer("slipped", mc.n_slipped);
    js.integer("inconclusive", mc.n_inconclusive);
    js.integer("left_estimate", mc.n_exited);
    js.num("worst_margin", mc.worst_margin);
    js.integer("audit_trajectories", sq.n);
    js.integer("audit_violations", audit_violations);
    js.integer("audit_unconverged", audit_unconverged);
    js.num("audit_worst_excess", worst_excess);
    js.boolean("pass", pass);
    js.write(cfg.output / "validation.json");
    out << "validate: " << (pass ? "pass" : "FAIL") << "\n";
    return pass ? kOk : kValidation;
  } catch (const Error& e) {
    err << "validate: " << e.what() << "\n";
    return kNumerical;
  }
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    const CascadeModel m = stage("model", [&] { return build_model(cfg); });
    const Gauge g = stage("gauge", [&] { return build_gauge(m.A(), cfg.gauge_margin); });
    Vec6 x0;
    if (cfg.initial) {
      x0 = *cfg.initial;
    } else {
      const Loaded L = load_artifacts(cfg);
      std::mt19937_64 rng(cfg.seed);
      x0 = sample_inside(L.estimate, L.family, L.gauge, cfg.inset, McOptions{}.max_rejections, rng);
    }
    SimOptions so;
    so.horizon = cfg.horizon;
    so.record = true;
    const TrajectoryOutcome o = stage("simulate", [&] { return simulate(x0, m, g, so); });
    fs::create_directories(cfg.output);
    write_trajectory_csv(cfg.output / "trajectory.csv", o);
    out << "x0: " << fmt17(x0[0]);
    for (int i = 1; i < 6; ++i) out << ", " << fmt17(x0[i]);
    out << "\n"
        << "outcome: " << (o.slipped ? "slipped" : o.converged ? "converged" : "inconclusive")
        << " at t = " << fmt17(o.t_final) << "\n";
    return kOk;
  } catch (const Error& e) {
    err << "simulate: " << e.what() << "\n";
    return kNumerical;
  }
}

int cmd_export(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    const CycleFamily fam = stage("load", [&] {
      auto is = open_in(cfg.output / "family.csv");
      return read_family_csv(is);
    });
    {
      auto os = open_out(cfg.output / "cycles.csv");
      write_csv_header(os, {"V", "period", "max_abs_dtheta", "area"});
      for (const LimitCycle& c : fam.cycles) {
        if (c.is_origin()) continue;
        write_csv_row(os, {c.V, c.period, max_abs_dtheta(c), std::abs(signed_area(c))});
      }
    }
    {
      // At most 200 points per outline.
      auto os = open_out(cfg.output / "outlines.csv");
      write_csv_header(os, {"V", "dtheta", "domega"});
      for (const LimitCycle& c : fam.cycles) {
        if (c.is_origin()) continue;
        const std::size_t n = c.samples.size();
        const std::size_t stride = std::max<std::size_t>(1, n / 200);
        for (std::size_t i = 0; i < n; i += stride) {
          write_csv_row(os, {c.V, c.samples[i].s.dtheta, c.samples[i].s.domega});
        }
        write_csv_row(os, {c.V, c.samples.back().s.dtheta, c.samples.back().s.domega});
      }
    }
    out << "wrote " << cfg.output.string() << "/{cycles,outlines}.csv\n";
    return kOk;
  } catch (const Error& e) {
    err << "export: " << e.what() << "\n";
    return kNumerical;
  }
}

}  // namespace lockin::cli
