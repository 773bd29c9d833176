#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "lockin/domain.hpp"
#include "lockin/error.hpp"
#include "lockin/sim.hpp"
#include "support.hpp"

using namespace lockin;

namespace {

GrowthBound constant_table(double V_bar, double w_end, double (*F)(double, double)) {
  GrowthBound gb;
  gb.safety_factor = 1.0;
  gb.vpll_grid = {0.0, 0.5 * V_bar, V_bar};
  gb.vcc_grid = {0.0};
  for (int j = 1; j <= 200; ++j) gb.vcc_grid.push_back(w_end * j / 200.0);
  gb.values.resize(3, static_cast<Eigen::Index>(gb.vcc_grid.size()));
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < gb.values.cols(); ++j) {
      gb.values(i, j) = F(gb.vpll_grid[static_cast<std::size_t>(i)],
                          gb.vcc_grid[static_cast<std::size_t>(j)]);
    }
  }
  return gb;
}

}  // namespace

TEST_CASE("trivial estimate membership") {
  const double Vb = 10.0;
  const DomainEstimate t = trivial_estimate(Vb);
  CHECK(t.V_bar_bar == Vb);
  CHECK(contains_levels(Vb / 2, Vb / 2, t));
  CHECK(contains_levels(Vb, Vb, t));
  CHECK_FALSE(contains_levels(0.0, 1.01 * Vb, t));
  CHECK_FALSE(contains_levels(1.01 * Vb, 0.0, t));
}

TEST_CASE("zero growth never closes the estimate") {
  const GrowthBound gb = constant_table(1.0, 50.0, [](double, double) { return 0.0; });
  try {
    solve_phi(gb, 1.0, 1.0);
    FAIL("expected GridExhausted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::GridExhausted);
  }
}

TEST_CASE("negative growth clamps Phi at V_bar") {
  const GrowthBound gb = constant_table(1.0, 50.0, [](double, double) { return -1.0; });
  try {
    solve_phi(gb, 1.0, 1.0);
    FAIL("expected NoExtension");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoExtension);
  }
}

TEST_CASE("linear growth gives the closed form Phi = 2 V_bar - V") {
  const double gamma = 1.7, Vb = 3.0;
  // F = gamma * v makes Phi' = -1.
  static double g_gamma;
  g_gamma = gamma;
  const GrowthBound gb = constant_table(Vb, 10.0 * Vb, [](double, double v) { return g_gamma * v; });
  const DomainEstimate e = solve_phi(gb, gamma, Vb);
  CHECK(e.V_bar_bar == doctest::Approx(2.0 * Vb).epsilon(1e-8));
  CHECK(e.vcc.front() == 0.0);
  CHECK(e.phi.front() == Vb);
  CHECK(phi_at(e, 0.5 * Vb) == Vb);
  CHECK(phi_at(e, Vb) == Vb);
  for (double v = Vb; v <= 2.0 * Vb; v += 0.1) {
    CHECK(phi_at(e, v) == doctest::Approx(2.0 * Vb - v).epsilon(1e-7).scale(Vb));
  }
  CHECK(phi_at(e, 2.01 * Vb) < 0.0);
  CHECK(e.vcc[1] == Vb);
  for (std::size_t i = 1; i < e.vcc.size(); ++i) {
    CHECK(e.vcc[i] > e.vcc[i - 1]);
    CHECK(e.phi[i] <= e.phi[i - 1]);
    if (i >= 2) CHECK(e.vcc[i] - e.vcc[i - 1] <= Vb / 200.0 * (1 + 1e-12));
  }
}

TEST_CASE("default model estimate") {
  const DomainEstimate& e = test::domain().estimate;
  const CycleFamily& fam = test::family();
  CHECK(e.V_bar == fam.V_bar);
  CHECK(e.V_bar_bar > e.V_bar);
  CHECK(phi_at(e, e.V_bar) == e.V_bar);
  CHECK(e.phi.back() == 0.0);
  for (std::size_t i = 1; i < e.phi.size(); ++i) CHECK(e.phi[i] <= e.phi[i - 1]);

  const DomainEstimate& e2 = test::domain("version-II").estimate;
  CHECK(e2.V_bar_bar - e2.V_bar < e.V_bar_bar - e.V_bar);
}

TEST_CASE("state membership") {
  const DomainEstimate& e = test::domain().estimate;
  const CycleFamily& fam = test::family();
  const Gauge& g = test::gauge();
  CHECK(contains(PllState{}, Vec4::Zero(), e, fam, g));
  std::mt19937_64 rng(41);
  const CcState edge = test::random_on_ellipsoid(g, e.V_bar_bar, rng);
  CHECK(contains(PllState{}, edge, e, fam, g));
  CHECK_FALSE(contains(PllState{}, 1.001 * edge, e, fam, g));
  for (double th : {std::numbers::pi, -std::numbers::pi, 3.5}) {
    CHECK_FALSE(contains(PllState{th, 0.0}, Vec4::Zero(), e, fam, g));
  }
}

TEST_CASE("domain CSV round trip") {
  const DomainEstimate& e = test::domain().estimate;
  std::stringstream ss;
  write_domain_csv(ss, e);
  const DomainEstimate back = read_domain_csv(ss);
  CHECK(back.V_bar == e.V_bar);
  CHECK(back.V_bar_bar == e.V_bar_bar);
  CHECK(back.vcc == e.vcc);
  CHECK(back.phi == e.phi);
}

TEST_CASE("trajectories started on the Phi curve are not pushed outward") {
  const DomainEstimate& e = test::domain().estimate;
  const CycleFamily& fam = test::family();
  const Gauge& g = test::gauge();
  const CascadeModel& m = test::model();
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int runs = 0, exits = 0;
  double worst = kUnbounded;
  while (runs < 200) {
    const double w = e.V_bar + u(rng) * (e.V_bar_bar - e.V_bar);
    const double level = phi_at(e, w);
    if (level <= 0.0) continue;
    // Point with V^PLL = level on a random ray, by bisection on the radius.
    const double ang = 2 * std::numbers::pi * u(rng);
    const PllState dir{std::cos(ang), std::sin(ang)};
    const double r_out = ray_distance(dir, fam.cycles.back());
    double lo = 0.0, hi = r_out;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      const auto v = query_vpll(PllState{mid * dir.dtheta, mid * dir.domega}, fam);
      (v && *v <= level ? lo : hi) = mid;
    }
    Vec6 s0;
    s0[0] = lo * dir.dtheta;
    s0[1] = lo * dir.domega;
    s0.tail<4>() = test::random_on_ellipsoid(g, w, rng);
    SimOptions so;
    so.record = true;
    so.ball_vcc = 1e-6 * e.V_bar;
    const TrajectoryOutcome o = simulate(s0, m, g, so);
    CHECK_FALSE(o.slipped);
    bool out = false;
    for (const TrajectorySample& t : o.trajectory) {
      const auto vp = query_vpll(PllState{t.state[0], t.state[1]}, fam);
      const double margin = vp ? phi_at(e, v_cc(t.state.tail<4>(), g)) - *vp : -kUnbounded;
      worst = std::min(worst, margin);
      // Boundary start: allow interpolation slack of the V^PLL query.
      if (margin < -1e-3 * e.V_bar) out = true;
    }
    exits += out;
    ++runs;
  }
  MESSAGE("worst boundary margin " << worst);
  CHECK(exits == 0);
}

TEST_CASE("inflated fixture scales Phi") {
  const DomainEstimate& e = test::domain().estimate;
  const DomainEstimate big = inflate(e, 1.0, 1.5);
  CHECK(phi_at(big, 0.0) == doctest::Approx(1.5 * e.V_bar));
  CHECK(big.V_bar_bar == e.V_bar_bar);
  const DomainEstimate wide = inflate(e, 2.0, 1.0);
  CHECK(wide.V_bar_bar == doctest::Approx(e.V_bar + 2.0 * (e.V_bar_bar - e.V_bar)));
}
