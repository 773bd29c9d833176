#include <doctest.h>

#include <random>

#include "lockin/error.hpp"
#include "lockin/gauge.hpp"
#include "support.hpp"

using namespace lockin;

TEST_CASE("gauge for A = -I") {
  const Gauge g = build_gauge(-Mat4::Identity(), 0.5);
  CHECK(g.gamma == doctest::Approx(1.0));
  CHECK((g.P - Mat4::Identity()).norm() < 1e-12);
  CHECK(g.decay_margin < 0.0);
}

TEST_CASE("gauge for a diagonal A") {
  Mat4 A = Mat4::Zero();
  A.diagonal() << -1, -2, -3, -4;
  const Gauge g = build_gauge(A, 0.5);
  CHECK(g.gamma == doctest::Approx(1.0));
  for (int k = 0; k < 4; ++k) {
    const double a = k + 1.0;
    CHECK(g.P(k, k) == doctest::Approx(1.0 / (2.0 * a - 1.0)));
    for (int j = 0; j < 4; ++j) {
      if (j != k) CHECK(std::abs(g.P(k, j)) < 1e-14);
    }
  }
}

TEST_CASE("default model gauge decays at rate gamma") {
  for (const char* p : {"version-I", "version-II"}) {
    const Mat4& A = test::model(p).A();
    const Gauge& g = test::gauge(p);
    const Mat4 M = A.transpose() * g.P + g.P * A + g.gamma * g.P;
    const double top = Eigen::SelfAdjointEigenSolver<Mat4>(M).eigenvalues().maxCoeff();
    CHECK(top < 0.0);
    CHECK(g.gamma == doctest::Approx(11.0 / 6.0).epsilon(1e-12));
    CHECK(Eigen::SelfAdjointEigenSolver<Mat4>(g.P).eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("Lyapunov solve residual") {
  const Mat4& A = test::model().A();
  const Mat4 X = solve_lyapunov(A, Mat4::Identity());
  CHECK((A.transpose() * X + X * A + Mat4::Identity()).norm() < 1e-10 * X.norm());
}

TEST_CASE("non-Hurwitz A is rejected") {
  Mat4 A = -Mat4::Identity();
  A(0, 0) = 0.1;
  CHECK_THROWS_AS(build_gauge(A), Error);
}

TEST_CASE("v_cc against an explicit double sum") {
  const Gauge& g = test::gauge();
  CHECK(v_cc(Vec4::Zero(), g) == 0.0);
  Gauge id;
  CHECK(v_cc(Vec4(1, 0, 0, 0), id) == 1.0);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 10.0);
  for (int i = 0; i < 100; ++i) {
    const Vec4 x(n(rng), n(rng), n(rng), n(rng));
    double sum = 0.0;
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) sum += x[a] * g.P(a, b) * x[b];
    }
    CHECK(v_cc(x, g) == doctest::Approx(sum).epsilon(1e-13));
  }
}

TEST_CASE("ellipsoid points lie on the level set") {
  const Gauge& g = test::gauge();
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const double V = 1e3 * (i + 1);
    CHECK(v_cc(test::random_on_ellipsoid(g, V, rng), g) == doctest::Approx(V).epsilon(1e-12));
  }
}

TEST_CASE("singularity clearance") {
  const CascadeModel& m = test::model();
  Gauge id;
  // nu = 0 is handled by a plug-in model without current coupling.
  struct Zero final : PllCoupling {
    double g(double th, double) const override { return std::sin(th); }
    Vec2 g_grad(double th, double) const override { return Vec2(std::cos(th), 0.0); }
    Vec4 h(double) const override { return Vec4::Zero(); }
    Vec4 h_prime(double) const override { return Vec4::Zero(); }
  };
  const CascadeModel free(-Mat4::Identity(), 1.0, 1.0, 1.0, Vec4::Zero(), std::make_shared<Zero>());
  CHECK(singularity_clearance(id, free) == kUnbounded);

  const CascadeModel unit(-Mat4::Identity(), 1.0, 1.0, 1.0, Vec4(1, 0, 0, 0),
                          std::make_shared<Zero>());
  CHECK(singularity_clearance(id, unit, 0.0) == doctest::Approx(1.0));

  CHECK(singularity_clearance(test::gauge(), m) > test::family().V_bar);
}
