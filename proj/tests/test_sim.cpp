#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "lockin/sim.hpp"
#include "support.hpp"

using namespace lockin;

TEST_CASE("origin is converged after the dwell") {
  const CascadeModel& m = test::model();
  const Gauge& g = test::gauge();
  const TrajectoryOutcome o = simulate(Vec6::Zero(), m, g);
  CHECK(o.converged);
  CHECK_FALSE(o.slipped);
  CHECK(o.t_final < 6 * linear_period(m));
}

TEST_CASE("near the unstable side of the pendulum the outcome is decided") {
  const CascadeModel& m = test::model();
  const Gauge& g = test::gauge();
  for (double th : {std::numbers::pi - 1e-2, -std::numbers::pi + 1e-2, std::numbers::pi - 1e-4}) {
    for (double om : {-0.05, 0.0, 0.05}) {
      Vec6 s = Vec6::Zero();
      s[0] = th;
      s[1] = om;
      const TrajectoryOutcome o = simulate(s, m, g);
      CHECK_FALSE(o.inconclusive());
    }
  }
  Vec6 s = Vec6::Zero();
  s[0] = std::numbers::pi;
  CHECK(simulate(s, m, g).slipped);
}

TEST_CASE("default horizon") {
  const CascadeModel& m = test::model();
  const Gauge& g = test::gauge();
  const double lam = std::abs(check_oscillatory(m).eigenvalues[0].real());
  CHECK(default_horizon(m, g) == doctest::Approx(50.0 * std::max(2.0 / g.gamma, 1.0 / lam)));
}

TEST_CASE("empty Monte Carlo run") {
  const McReport r = monte_carlo_validate(test::domain().estimate, test::family(), test::gauge(),
                                          test::model(), 0, 1);
  CHECK(r.n == 0);
  CHECK(r.runs.empty());
}

TEST_CASE("samples land inside the inset estimate") {
  const DomainEstimate& e = test::domain().estimate;
  const CycleFamily& fam = test::family();
  const Gauge& g = test::gauge();
  std::mt19937_64 rng(51);
  for (int i = 0; i < 300; ++i) {
    const Vec6 s = sample_inside(e, fam, g, 0.01, 100000, rng);
    const double vcc = v_cc(s.tail<4>(), g);
    CHECK(vcc <= 0.99 * e.V_bar_bar * (1 + 1e-12));
    const auto vp = query_vpll(PllState{s[0], s[1]}, fam);
    REQUIRE(vp.has_value());
    CHECK(*vp <= phi_at(e, vcc));
  }
}

TEST_CASE("Monte Carlo is deterministic across thread counts") {
  McOptions a;
  a.threads = 1;
  McOptions b;
  b.threads = 3;
  const auto& e = test::domain().estimate;
  const McReport r1 = monte_carlo_validate(e, test::family(), test::gauge(), test::model(), 6, 99, a);
  const McReport r2 = monte_carlo_validate(e, test::family(), test::gauge(), test::model(), 6, 99, b);
  REQUIRE(r1.runs.size() == r2.runs.size());
  for (std::size_t i = 0; i < r1.runs.size(); ++i) {
    CHECK(r1.runs[i].state0 == r2.runs[i].state0);
    CHECK(r1.runs[i].outcome.t_final == r2.runs[i].outcome.t_final);
  }
  CHECK(r1.n_converged == 6);
}

TEST_CASE("audit: origin and a current-loop-only start") {
  const CycleFamily& fam = test::family();
  const Gauge& g = test::gauge();
  const CascadeModel& m = test::model();
  SimOptions so;
  so.record = true;
  const TrajectoryOutcome rest = simulate(Vec6::Zero(), m, g, so);
  CHECK(lyapunov_audit(rest, fam, g).violations == 0);

  std::mt19937_64 rng(52);
  Vec6 s = Vec6::Zero();
  s.tail<4>() = test::random_on_ellipsoid(g, 0.5 * fam.V_bar, rng);
  const TrajectoryOutcome o = simulate(s, m, g, so);
  CHECK(o.converged);
  const double v0 = v_cc(s.tail<4>(), g);
  double prev = kUnbounded;
  for (const TrajectorySample& t : o.trajectory) {
    const double v = v_cc(t.state.tail<4>(), g);
    // Below this the integrator's absolute tolerance dominates.
    if (prev > 1e-12 * v0) CHECK(v < prev);
    prev = v;
  }
  CHECK(lyapunov_audit(o, fam, g).violations == 0);
}

TEST_CASE("trivial-square trajectories keep max(V^PLL, V^CC) non-increasing") {
  const CycleFamily& fam = test::family();
  McOptions mo;
  mo.keep_trajectories = true;
  const McReport r = monte_carlo_validate(trivial_estimate(fam.V_bar), fam, test::gauge(),
                                          test::model(), 20, 5, mo);
  CHECK(r.n_converged == 20);
  for (const McTrajectory& t : r.runs) {
    const AuditReport a = lyapunov_audit(t.outcome, fam, test::gauge());
    CHECK(a.samples > 10);
    CHECK(a.violations == 0);
  }
}
