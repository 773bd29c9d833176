#include <doctest.h>

#include <cmath>
#include <numbers>

#include "lockin/comparison.hpp"
#include "lockin/dae.hpp"
#include "lockin/family.hpp"
#include "support.hpp"

using namespace lockin;

namespace {

SemiExplicitDae decay() {
  SemiExplicitDae d;
  d.n_diff = 1;
  d.rhs = [](double, const VectorXd& y, const VectorXd&, int, VectorXd& yd) { yd = -y; };
  return d;
}

SemiExplicitDae harmonic() {
  SemiExplicitDae d;
  d.n_diff = 2;
  d.rhs = [](double, const VectorXd& y, const VectorXd&, int, VectorXd& yd) {
    yd.resize(2);
    yd << y[1], -y[0];
  };
  return d;
}

DaeState start(const SemiExplicitDae& d, std::initializer_list<double> y) {
  VectorXd v(static_cast<Eigen::Index>(y.size()));
  int i = 0;
  for (double x : y) v[i++] = x;
  return make_consistent(d, 0.0, v, VectorXd());
}

}  // namespace

TEST_CASE("exponential decay") {
  const SemiExplicitDae d = decay();
  const IntegrationResult r = integrate(d, start(d, {1.0}), 1.0);
  CHECK(r.final_state.t == 1.0);
  CHECK(std::abs(r.final_state.diff[0] - std::exp(-1.0)) < 1e-6);
}

TEST_CASE("algebraic variable tracks the differential one") {
  SemiExplicitDae d = decay();
  d.n_alg = 1;
  d.residual = [](double, const VectorXd& y, const VectorXd& z, VectorXd& r) {
    r.resize(1);
    r[0] = z[0] - y[0];
  };
  DaeState s0;
  s0.diff = VectorXd::Constant(1, 1.0);
  s0 = make_consistent(d, 0.0, s0.diff, VectorXd::Constant(1, 0.3));
  CHECK(s0.alg[0] == doctest::Approx(1.0).epsilon(1e-12));
  const IntegrationResult r = integrate(d, s0, 2.0);
  for (const DaeSample& s : r.samples) CHECK(std::abs(s.z[0] - s.y[0]) < 1e-12);
  CHECK(std::abs(r.final_state.diff[0] - std::exp(-2.0)) < 1e-6);
}

TEST_CASE("harmonic oscillator keeps its period over ten cycles") {
  SemiExplicitDae d = harmonic();
  DaeEvent up;
  up.name = "y0 up";
  up.fn = [](double, const VectorXd& y, const VectorXd&) { return y[0]; };
  up.direction = 1;
  d.events = {up};
  IntegrateOptions io;
  io.step.rtol = 1e-10;
  io.step.atol = 1e-12;
  io.event_tol = 1e-12;
  const IntegrationResult r = integrate(d, start(d, {0.0, 1.0}), 10.5 * 2 * std::numbers::pi, io);
  REQUIRE(r.events.size() == 10);
  for (std::size_t k = 0; k < r.events.size(); ++k) {
    CHECK(std::abs(r.events[k].t - 2 * std::numbers::pi * (k + 1.0)) < 1e-5);
  }
  const double T = (r.events.back().t - r.events.front().t) / 9.0;
  CHECK(std::abs(T - 2 * std::numbers::pi) < 1e-5);
}

TEST_CASE("terminating event is located to 1e-9") {
  SemiExplicitDae d;
  d.n_diff = 1;
  d.rhs = [](double, const VectorXd&, const VectorXd&, int, VectorXd& yd) {
    yd = VectorXd::Constant(1, -1.0);
  };
  DaeEvent zero;
  zero.name = "zero";
  zero.fn = [](double, const VectorXd& y, const VectorXd&) { return y[0]; };
  zero.action = DaeEvent::Action::Terminate;
  d.events = {zero};
  const IntegrationResult r = integrate(d, start(d, {1.0}), 5.0);
  CHECK(r.terminated);
  REQUIRE(r.events.size() == 1);
  CHECK(std::abs(r.events[0].t - 1.0) < 1e-9);
  CHECK(std::abs(r.final_state.t - 1.0) < 1e-9);
}

TEST_CASE("switch events re-select the mode and apply the jump") {
  // y' = +1 in mode 0, -1 in mode 1; switch at y = 1 flips the mode and
  // kicks a second component.
  SemiExplicitDae d;
  d.n_diff = 2;
  d.rhs = [](double, const VectorXd&, const VectorXd&, int mode, VectorXd& yd) {
    yd.resize(2);
    yd << (mode == 0 ? 1.0 : -1.0), 0.0;
  };
  d.select_mode = [](double, const VectorXd&, const VectorXd&, int crossing) {
    return crossing > 0 ? 1 : 0;
  };
  d.jump = [](double, VectorXd& y, const VectorXd&, int, int) { y[1] += 1.0; };
  DaeEvent sw;
  sw.name = "y=1";
  sw.fn = [](double, const VectorXd& y, const VectorXd&) { return y[0] - 1.0; };
  sw.direction = 1;
  sw.action = DaeEvent::Action::Switch;
  d.events = {sw};
  const IntegrationResult r = integrate(d, start(d, {0.0, 0.0}), 3.0);
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].mode_before == 0);
  CHECK(r.events[0].mode_after == 1);
  CHECK(r.final_state.diff[0] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(r.final_state.diff[1] == 1.0);
}

TEST_CASE("comparison system at tiny V follows the unforced PLL") {
  const CascadeModel& m = test::model();
  const Gauge& g = test::gauge();
  const ComparisonSystem sys = make_comparison_system(1e-14, g, m, 0.05, false);
  const double T = linear_period(m);

  SemiExplicitDae free;
  free.n_diff = 2;
  free.rhs = [&m](double, const VectorXd& y, const VectorXd&, int, VectorXd& yd) {
    const Vec6 r = eval_rhs_full(PllState{y[0], y[1]}, Vec4::Zero(), m);
    yd = r.head<2>();
  };

  IntegrateOptions io;
  io.step.rtol = 1e-10;
  io.step.atol = 1e-12;
  io.step.h_max = T / 20;
  const DaeState a0 = comparison_state(sys, PllState{0.05, 0.0});
  const DaeState b0 = start(free, {0.05, 0.0});
  const IntegrationResult a = integrate(sys.dae, a0, 3 * T, io);
  const IntegrationResult b = integrate(free, b0, 3 * T, io);
  const Vec2 ya = a.final_state.diff.head<2>();
  const Vec2 yb = b.final_state.diff.head<2>();
  CHECK((ya - yb).norm() < 1e-6 * 0.05);
  // Spiral: the phase error shrinks every turn.
  CHECK(std::abs(ya.x()) < 0.05);
  CHECK(ya.norm() < 0.05);
}

TEST_CASE("a converged cycle crosses domega = 0 twice per revolution") {
  const CycleFamily& fam = test::family();
  const CascadeModel& m = test::model();
  const Gauge& g = test::gauge();
  for (std::size_t k : {std::size_t{1}, fam.cycles.size() / 2, fam.cycles.size() - 1}) {
    const LimitCycle& c = fam.cycles[k];
    const ComparisonSystem sys = make_comparison_system(c.V, g, m, fam.band_margin, false);
    IntegrateOptions io;
    io.step.h_max = c.period / 20;
    const DaeState s0 = comparison_state(sys, PllState{c.section_dtheta, 0.0});
    const IntegrationResult r = integrate(sys.dae, s0, 2.75 * c.period, io);
    int switches = 0;
    for (const EventRecord& e : r.events) switches += e.index == comparison::kSwitchEvent;
    // Starting on the line, the first crossing at t = 0 is not an event.
    CHECK(switches == 5);
  }
}
