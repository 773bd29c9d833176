#include <doctest.h>

#include <cmath>
#include <random>

#include "lockin/comparison.hpp"
#include "lockin/extremal.hpp"
#include "support.hpp"

using namespace lockin;
using lockin::test::rel_err;

namespace {

struct Instance {
  PllState s;
  double V;
};

Instance random_instance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> th(-2.5, 2.5), om(-0.3, 0.3), lv(0.0, 4.0);
  return Instance{{th(rng), om(rng)}, std::pow(10.0, lv(rng))};
}

}  // namespace

TEST_CASE("KKT solution satisfies its invariants") {
  const CascadeModel& m = test::model();
  const Gauge& g = test::gauge();
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const Instance in = random_instance(rng);
    for (Sense sense : {Sense::Min, Sense::Max}) {
      const ExtremalPoint p = solve_kkt(in.s, in.V, sense, g, m);
      CHECK(rel_err(v_cc(p.x_star, g), in.V) < 1e-10);
      CHECK(kkt_residual(in.s, in.V, p.x_star, p.lambda, g, m).norm() < 1e-10);
      CHECK((sense == Sense::Min ? p.lambda < 0.0 : p.lambda > 0.0));
      CHECK(p.f_value == doctest::Approx(eval_f(in.s, p.x_star, m)).epsilon(1e-14));
    }
  }
}

TEST_CASE("min never exceeds max") {
  const CascadeModel& m = test::model("version-II");
  const Gauge& g = test::gauge("version-II");
  std::mt19937_64 rng(12);
  for (int i = 0; i < 100; ++i) {
    const Instance in = random_instance(rng);
    CHECK(solve_kkt(in.s, in.V, Sense::Min, g, m).f_value <=
          solve_kkt(in.s, in.V, Sense::Max, g, m).f_value);
  }
}

TEST_CASE("degenerate ellipsoid") {
  const CascadeModel& m = test::model();
  const Gauge& g = test::gauge();
  const PllState s{0.7, -0.05};
  const ExtremalPoint z = solve_kkt(s, 0.0, Sense::Max, g, m);
  CHECK(z.x_star.norm() == 0.0);
  CHECK(z.f_value == eval_f(s, Vec4::Zero(), m));
  const OracleResult o = oracle_extremize(s, 0.0, Sense::Min, g, m, 100);
  CHECK(o.point.x_star.norm() == 0.0);
  CHECK(o.point.f_value == eval_f(s, Vec4::Zero(), m));

  const ExtremalPoint tiny = solve_kkt(s, 1e-14, Sense::Min, g, m);
  CHECK(tiny.x_star.norm() < 1e-5);
  CHECK(tiny.f_value == doctest::Approx(eval_f(s, Vec4::Zero(), m)).epsilon(1e-6));
}

TEST_CASE("KKT matches the brute-force oracle") {
  const CascadeModel& m = test::model();
  const Gauge& g = test::gauge();
  std::mt19937_64 rng(13);
  for (int i = 0; i < 10; ++i) {
    const Instance in = random_instance(rng);
    for (Sense sense : {Sense::Min, Sense::Max}) {
      const double kkt = solve_kkt(in.s, in.V, sense, g, m).f_value;
      const OracleResult o = oracle_extremize(in.s, in.V, sense, g, m, 4000);
      CHECK(o.boundary_attained);
      CHECK(std::abs(kkt - o.point.f_value) <= std::max(1e-4 * std::abs(kkt), 1e-8));
    }
  }
}

TEST_CASE("f_star branch and dominance") {
  const CascadeModel& m = test::model();
  const Gauge& g = test::gauge();
  std::mt19937_64 rng(14);
  for (int i = 0; i < 40; ++i) {
    const Instance in = random_instance(rng);
    const double fs = f_star(in.s, in.V, g, m);
    const Sense sense = comparison_sense(in.s);
    CHECK(fs == solve_kkt(in.s, in.V, sense, g, m).f_value);
    for (int k = 0; k < 200; ++k) {
      const double f = eval_f(in.s, test::random_in_ellipsoid(g, in.V, rng), m);
      if (sense == Sense::Min) {
        CHECK(fs <= f + 1e-12 * std::abs(f));
      } else {
        CHECK(fs >= f - 1e-12 * std::abs(f));
      }
    }
  }
}

TEST_CASE("on the switching line the comparison velocity points along (k_p, k_i)") {
  const CascadeModel& m = test::model();
  const Gauge& g = test::gauge();
  for (double th : {-2.0, -0.5, 0.3, 1.4}) {
    const PllState s{th, 0.0};
    for (double V : {1.0, 100.0, 1e4}) {
      const Vec2 v = comparison_velocity(s, f_star(s, V, g, m), m);
      CHECK(std::abs(v.x() * m.k_i() - v.y() * m.k_p()) <= 1e-15 * v.norm());
    }
  }
}

TEST_CASE("sphere points are unit and deterministic") {
  for (std::uint64_t i = 0; i < 100; ++i) {
    CHECK(sphere_point(i).norm() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(sphere_point(i) == sphere_point(i));
  }
}
