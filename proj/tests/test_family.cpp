#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "lockin/comparison.hpp"
#include "lockin/family.hpp"
#include "support.hpp"

using namespace lockin;
using lockin::test::rel_err;

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.empty() ? 0.0 : v[v.size() / 2];
}

// Falling section crossing with dtheta > 0 after t > 0.
double one_revolution(const LimitCycle& c, const Gauge& g, const CascadeModel& m, double margin,
                      double rtol) {
  const ComparisonSystem sys = make_comparison_system(c.V, g, m, margin, false);
  IntegrateOptions io;
  io.step.rtol = rtol;
  io.step.atol = 1e-3 * rtol;
  io.step.h_max = c.period / 20;
  io.event_tol = 1e-13;
  io.record_samples = false;
  double end = std::numeric_limits<double>::quiet_NaN();
  io.on_event = [&](const EventRecord& e) {
    if (e.index == comparison::kSwitchEvent && e.crossing < 0 && e.y[0] > 0.0) {
      end = e.y[0];
      return true;
    }
    return false;
  };
  integrate(sys.dae, comparison_state(sys, PllState{c.section_dtheta, 0.0}), 3 * c.period, io);
  return end;
}

}  // namespace

TEST_CASE("innermost cycle period approaches the linearized period") {
  const CycleFamily& fam = test::family();
  const CascadeModel& m = test::model();
  REQUIRE(fam.cycles.size() > 2);
  CHECK(fam.cycles[0].is_origin());
  CHECK(fam.cycles[0].period == linear_period(m));
  CHECK(rel_err(fam.cycles[1].period, linear_period(m)) < 1e-3);
  CHECK(fam.cycles[1].section_dtheta < 0.02);
}

TEST_CASE("cycles are periodic when re-integrated") {
  const CycleFamily& fam = test::family();
  FamilyOptions fo;
  for (std::size_t k = 1; k < fam.cycles.size(); k += 9) {
    const LimitCycle& c = fam.cycles[k];
    const double back = one_revolution(c, test::gauge(), test::model(), fam.band_margin, 1e-8);
    CHECK(std::abs(back - c.section_dtheta) <= 10 * fo.cycle_tol);
    CHECK(c.closure <= 10 * fo.cycle_tol);
    CHECK(c.multiplier < 1.0);
  }
}

TEST_CASE("cycles enclose the origin clockwise and stay in the band") {
  const CycleFamily& fam = test::family();
  for (std::size_t k = 1; k < fam.cycles.size(); ++k) {
    const LimitCycle& c = fam.cycles[k];
    CHECK(signed_area(c) < 0.0);
    CHECK(point_in_cycle(PllState{0.0, 0.0}, c));
    CHECK(c.star);
    CHECK(max_abs_dtheta(c) < std::numbers::pi - fam.band_margin);
  }
}

TEST_CASE("family is strictly nested") {
  const CycleFamily& fam = test::family();
  const NestingReport r = check_nesting(fam);
  CHECK(r.pairs == static_cast<int>(fam.cycles.size()) - 1);
  CHECK(r.violations == 0);
  for (std::size_t k = 1; k + 1 < fam.cycles.size(); k += 5) {
    for (const CycleSample& s : fam.cycles[k].samples) {
      CHECK(point_in_cycle(s.s, fam.cycles[k + 1]));
    }
  }
}

TEST_CASE("outer cycle reaches about a quarter turn of phase error") {
  const double r = max_abs_dtheta(test::family().cycles.back()) / std::numbers::pi;
  CHECK(r > 0.3);
  CHECK(r < 0.7);
  CHECK(test::family().V_safe > test::family().V_bar);
}

TEST_CASE("primed constraint 2 x^T P x' = 1 on both branches") {
  const CycleFamily& fam = test::family();
  const Gauge& g = test::gauge();
  const CascadeModel& m = test::model();
  using namespace comparison;
  for (std::size_t k = 1; k < fam.cycles.size(); k += 11) {
    const LimitCycle& c = fam.cycles[k];
    const ComparisonSystem sys = make_comparison_system(c.V, g, m, fam.band_margin, true);
    VectorXd z;
    for (std::size_t i = 0; i < c.samples.size(); i += 50) {
      const CycleSample& s = c.samples[i];
      VectorXd y(4);
      y << s.s.dtheta, s.s.domega, s.prime.x(), s.prime.y();
      z = sys.dae.alg_solve(s.t, y, z);
      for (int off : {kXMin, kXMax}) {
        const Vec4 x = z.segment<4>(off);
        const Vec4 xp = z.segment<4>(kPrimeOffset + off);
        CHECK(std::abs(2.0 * (g.P * x).dot(xp) - 1.0) < 1e-10);
      }
      VectorXd res;
      sys.dae.residual(s.t, y, z, res);
      CHECK(res.norm() < 1e-9);
    }
  }
}

TEST_CASE("section primes match central differences across the family") {
  const CycleFamily& fam = test::family();
  FamilyOptions tight;
  tight.cycle_tol = 1e-12;
  tight.step.rtol = 1e-11;
  tight.step.atol = 1e-14;
  std::vector<double> errs;
  for (std::size_t k = 2; k < fam.cycles.size(); k += 15) {
    const LimitCycle& c = fam.cycles[k];
    const double dV = 1e-3 * c.V;
    const LimitCycle up = find_limit_cycle(c.V + dV, c.section_dtheta, test::gauge(), test::model(), tight);
    const LimitCycle dn = find_limit_cycle(c.V - dV, c.section_dtheta, test::gauge(), test::model(), tight);
    const double fd = (up.section_dtheta - dn.section_dtheta) / (2 * dV);
    errs.push_back(rel_err(c.section_prime, fd));
  }
  CHECK(median(errs) < 1e-3);
}

TEST_CASE("primes scale like 1/sqrt(V) near the origin") {
  const CycleFamily& fam = test::family();
  double lo = kUnbounded, hi = 0.0;
  for (std::size_t k = 1; k <= 5; ++k) {
    const LimitCycle& c = fam.cycles[k];
    double pm = 0.0;
    for (const CycleSample& s : c.samples) pm = std::max(pm, s.prime.norm());
    const double scaled = std::sqrt(c.V) * pm;
    CHECK(std::isfinite(scaled));
    lo = std::min(lo, scaled);
    hi = std::max(hi, scaled);
  }
  CHECK(hi / lo < 1.5);
}

TEST_CASE("gradient solves both defining equations") {
  const CycleFamily& fam = test::family();
  for (std::size_t k = 1; k < fam.cycles.size(); ++k) {
    const LimitCycle& c = fam.cycles[k];
    REQUIRE(c.has_grad);
    int good = 0;
    for (const CycleSample& s : c.samples) {
      const double scale = std::max(1.0, s.grad.norm() * s.velocity.norm());
      const bool ok = std::abs(s.grad.dot(s.velocity)) <= 1e-9 * scale &&
                      std::abs(s.grad.dot(s.prime) - 1.0) <= 1e-9;
      good += ok;
      CHECK(std::isfinite(s.grad.norm()));
    }
    CHECK(good >= 0.8 * static_cast<double>(c.samples.size()));
  }
}

TEST_CASE("gradient predicts the level step to the next cycle") {
  const CycleFamily& fam = test::family();
  std::vector<double> errs;
  for (std::size_t k = 1; k + 1 < fam.cycles.size(); ++k) {
    const LimitCycle& a = fam.cycles[k];
    const LimitCycle& b = fam.cycles[k + 1];
    for (std::size_t i = 0; i < a.samples.size(); i += 97) {
      const Vec2 p(a.samples[i].s.dtheta, a.samples[i].s.domega);
      std::size_t best = 0;
      double bd = kUnbounded;
      for (std::size_t j = 0; j < b.samples.size(); ++j) {
        const double d = (Vec2(b.samples[j].s.dtheta, b.samples[j].s.domega) - p).norm();
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      const Vec2 q(b.samples[best].s.dtheta, b.samples[best].s.domega);
      const double pred = 0.5 * (a.samples[i].grad + b.samples[best].grad).dot(q - p);
      errs.push_back(rel_err(pred, b.V - a.V));
    }
  }
  CHECK(median(errs) < 0.05);
}

TEST_CASE("V^PLL queries") {
  const CycleFamily& fam = test::family();
  CHECK(query_vpll(PllState{0.0, 0.0}, fam) == 0.0);
  CHECK_FALSE(query_vpll(PllState{std::numbers::pi, 0.0}, fam).has_value());
  CHECK_FALSE(query_vpll(PllState{-std::numbers::pi, 0.0}, fam).has_value());
  for (std::size_t k = 1; k < fam.cycles.size(); k += 3) {
    const LimitCycle& c = fam.cycles[k];
    for (std::size_t i = 0; i < c.samples.size(); i += 113) {
      const auto v = query_vpll(c.samples[i].s, fam);
      REQUIRE(v.has_value());
      CHECK(rel_err(*v, c.V) < 1e-6);
    }
  }
  // Monotone outward along rays.
  for (double phi = 0.0; phi < 2 * std::numbers::pi; phi += 0.7) {
    double prev = -1.0;
    for (double r = 0.01; r < 0.2; r += 0.01) {
      const auto v = query_vpll(PllState{r * std::cos(phi) * 8, r * std::sin(phi)}, fam);
      if (!v) break;
      CHECK(*v >= prev);
      prev = *v;
    }
  }
}

TEST_CASE("polar index agrees with ray casting") {
  const CycleFamily& fam = test::family();
  std::mt19937_64 rng(21);
  for (std::size_t k = 1; k < fam.cycles.size(); k += 7) {
    const LimitCycle& c = fam.cycles[k];
    LimitCycle plain = c;
    plain.star = false;
    const double R = max_abs_dtheta(c) * 1.2;
    double wmax = 0.0;
    for (const CycleSample& s : c.samples) wmax = std::max(wmax, std::abs(s.s.domega));
    std::uniform_real_distribution<double> ut(-R, R), uw(-1.2 * wmax, 1.2 * wmax);
    for (int i = 0; i < 300; ++i) {
      const PllState p{ut(rng), uw(rng)};
      CHECK(point_in_cycle(p, c) == point_in_cycle(p, plain));
      CHECK(ray_distance(p, c) == doctest::Approx(ray_distance(p, plain)).epsilon(1e-9));
    }
  }
}

TEST_CASE("family CSV round trip") {
  const CycleFamily& fam = test::family();
  std::stringstream ss;
  write_family_csv(ss, fam);
  const std::string first = ss.str();
  const CycleFamily back = read_family_csv(ss);
  REQUIRE(back.cycles.size() == fam.cycles.size());
  CHECK(back.V_bar == fam.V_bar);
  std::stringstream again;
  write_family_csv(again, back);
  CHECK(again.str() == first);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ut(-1.6, 1.6), uw(-0.25, 0.25);
  for (int i = 0; i < 500; ++i) {
    const PllState p{ut(rng), uw(rng)};
    CHECK(query_vpll(p, back) == query_vpll(p, fam));
  }
}

TEST_CASE("version II family") {
  const CycleFamily& fam = test::family("version-II");
  CHECK(fam.cycles.size() > 10);
  CHECK(check_nesting(fam).violations == 0);
  const double r = max_abs_dtheta(fam.cycles.back()) / std::numbers::pi;
  CHECK(r > 0.3);
  CHECK(r < 0.7);
}
