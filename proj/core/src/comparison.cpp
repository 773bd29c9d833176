#include "lockin/comparison.hpp"

#include <cmath>
#include <numbers>

#include "lockin/error.hpp"

namespace lockin {

using namespace comparison;

namespace {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

PllState pll(const VectorXd& y) { return PllState{y[0], y[1]}; }

ExtremalPoint unpack(const VectorXd& z, int off, Sense sense) {
  ExtremalPoint p;
  p.x_star = z.segment<4>(off);
  p.lambda = z[off + 4];
  p.sense = sense;
  return p;
}

// V-derivative of one KKT branch:
//   2 (P x)^T x' = 1
//   (P - lambda H) x' - c lambda' = lambda (sign (b_th th' + b_om om') + H_om om' x)
Vec5 branch_prime(const Vec4& x, double lambda, const CouplingTerms& t, const Mat4& H_om,
                  Vec2 yp, const Gauge& gauge, const CascadeModel& m) {
  const Vec4 Px = gauge.P * x;
  const Vec4 c = m.kkt_direction(t, x);
  Mat5 J;
  J(0, 0) = 0.0;
  J.block<1, 4>(0, 1) = 2.0 * Px.transpose();
  J.block<4, 1>(1, 0) = -c;
  J.block<4, 4>(1, 1) = gauge.P - lambda * t.H;
  Vec5 rhs;
  rhs[0] = 1.0;
  rhs.tail<4>() =
      lambda * (m.sign_factor() * (t.b_dtheta * yp.x() + t.b_domega * yp.y()) + H_om * x * yp.y());
  const Eigen::FullPivLU<Mat5> lu(J);
  if (!lu.isInvertible()) throw Error(ErrorKind::IndexViolation, "sensitivity system is singular");
  const Vec5 sol = lu.solve(rhs);
  Vec5 out;  // (x', lambda') in the algebraic layout
  out.head<4>() = sol.tail<4>();
  out[4] = sol[0];
  return out;
}

Vec5 branch_prime_residual(const Vec4& x, double lambda, const Vec4& xp, double lp,
                           const CouplingTerms& t, const Mat4& H_om, Vec2 yp, const Gauge& gauge,
                           const CascadeModel& m) {
  const Vec4 Px = gauge.P * x;
  const Vec4 c = m.kkt_direction(t, x);
  Vec5 r;
  r[0] = 2.0 * Px.dot(xp) - 1.0;
  r.tail<4>() = (gauge.P - lambda * t.H) * xp - c * lp -
                lambda * (m.sign_factor() * (t.b_dtheta * yp.x() + t.b_domega * yp.y()) +
                          H_om * x * yp.y());
  return r;
}

Mat4 h_domega_matrix(PllState s, const CascadeModel& m) {
  const Vec4 hp = m.coupling().h_prime(s.domega);
  const Vec4& nu = m.nu();
  Mat4 out;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) out(i, j) = hp[i] * nu[j] - nu[i] * hp[j];
  }
  return out;
}

}  // namespace

double comparison_f(const VectorXd& z, int mode, PllState s, const CascadeModel& m) {
  const int off = mode == kModeMin ? kXMin : kXMax;
  return eval_f(s, z.segment<4>(off), m);
}

Vec2 comparison_velocity(PllState s, double f_star, const CascadeModel& m) {
  return Vec2(-m.k_p() * f_star + s.domega, -m.k_i() * f_star);
}

int mode_on_switch_line(double f_min, double f_max) {
  // domega' = -k_i f: both extremal values positive means the orbit leaves
  // into domega < 0, both negative into domega > 0.
  if (f_min > 0.0) return kModeMax;
  if (f_max < 0.0) return kModeMin;
  return kModeMin;
}

ComparisonSystem make_comparison_system(double V, const Gauge& gauge, const CascadeModel& m,
                                        double band_margin, bool with_sensitivity,
                                        const KktOptions& kkt) {
  if (!(V > 0.0)) throw Error(ErrorKind::OutOfRange, "comparison system needs V > 0");
  ComparisonSystem sys;
  sys.V = V;
  sys.with_sensitivity = with_sensitivity;
  SemiExplicitDae& d = sys.dae;
  d.n_diff = with_sensitivity ? 4 : 2;
  d.n_alg = with_sensitivity ? 20 : 10;

  const Gauge* gp = &gauge;
  const CascadeModel* mp = &m;

  d.alg_solve = [V, gp, mp, kkt, with_sensitivity](double, const VectorXd& y,
                                                  const VectorXd& guess) {
    const PllState s = pll(y);
    VectorXd z(with_sensitivity ? 20 : 10);
    const bool have_guess = guess.size() >= 10;
    const ExtremalPoint wmin = have_guess ? unpack(guess, kXMin, Sense::Min) : ExtremalPoint{};
    const ExtremalPoint wmax = have_guess ? unpack(guess, kXMax, Sense::Max) : ExtremalPoint{};
    const ExtremalPoint pmin = solve_kkt(s, V, Sense::Min, *gp, *mp, have_guess ? &wmin : nullptr, kkt);
    const ExtremalPoint pmax = solve_kkt(s, V, Sense::Max, *gp, *mp, have_guess ? &wmax : nullptr, kkt);
    z.segment<4>(kXMin) = pmin.x_star;
    z[kLambdaMin] = pmin.lambda;
    z.segment<4>(kXMax) = pmax.x_star;
    z[kLambdaMax] = pmax.lambda;
    if (with_sensitivity) {
      const CouplingTerms t = mp->terms(s);
      const Mat4 H_om = h_domega_matrix(s, *mp);
      const Vec2 yp(y[2], y[3]);
      z.segment<5>(kPrimeOffset + kXMin) =
          branch_prime(pmin.x_star, pmin.lambda, t, H_om, yp, *gp, *mp);
      z.segment<5>(kPrimeOffset + kXMax) =
          branch_prime(pmax.x_star, pmax.lambda, t, H_om, yp, *gp, *mp);
    }
    return z;
  };

  d.residual = [V, gp, mp, with_sensitivity](double, const VectorXd& y, const VectorXd& z,
                                             VectorXd& r) {
    const PllState s = pll(y);
    r.resize(with_sensitivity ? 20 : 10);
    r.segment<5>(0) = kkt_residual(s, V, z.segment<4>(kXMin), z[kLambdaMin], *gp, *mp);
    r.segment<5>(5) = kkt_residual(s, V, z.segment<4>(kXMax), z[kLambdaMax], *gp, *mp);
    if (with_sensitivity) {
      const CouplingTerms t = mp->terms(s);
      const Mat4 H_om = h_domega_matrix(s, *mp);
      const Vec2 yp(y[2], y[3]);
      const int o = kPrimeOffset;
      r.segment<5>(10) = branch_prime_residual(z.segment<4>(kXMin), z[kLambdaMin],
                                               z.segment<4>(o + kXMin), z[o + kLambdaMin], t,
                                               H_om, yp, *gp, *mp);
      r.segment<5>(15) = branch_prime_residual(z.segment<4>(kXMax), z[kLambdaMax],
                                               z.segment<4>(o + kXMax), z[o + kLambdaMax], t,
                                               H_om, yp, *gp, *mp);
    }
  };

  d.rhs = [mp, with_sensitivity](double, const VectorXd& y, const VectorXd& z, int mode,
                                 VectorXd& ydot) {
    const PllState s = pll(y);
    const int off = mode == kModeMin ? kXMin : kXMax;
    const Vec4 x = z.segment<4>(off);
    const double f = eval_f(s, x, *mp);
    ydot.resize(with_sensitivity ? 4 : 2);
    ydot[0] = -mp->k_p() * f + s.domega;
    ydot[1] = -mp->k_i() * f;
    if (with_sensitivity) {
      const FPartials p = eval_f_partials(s, x, *mp);
      const Vec4 xp = z.segment<4>(kPrimeOffset + off);
      const double fp = p.f_dtheta * y[2] + p.f_domega * y[3] + p.grad_x.dot(xp);
      ydot[2] = -mp->k_p() * fp + y[3];
      ydot[3] = -mp->k_i() * fp;
    }
  };

  d.select_mode = [mp](double, const VectorXd& y, const VectorXd& z, int crossing) {
    if (crossing > 0) return kModeMin;
    if (crossing < 0) return kModeMax;
    if (y[1] > 0.0) return kModeMin;
    if (y[1] < 0.0) return kModeMax;
    const PllState s = pll(y);
    return mode_on_switch_line(comparison_f(z, kModeMin, s, *mp), comparison_f(z, kModeMax, s, *mp));
  };

  if (with_sensitivity) {
    // Saltation: the crossing time moves with V, so the primes pick up
    // (F+ - F-) * domega' / domega'- at the switch.
    d.jump = [mp](double, VectorXd& y, const VectorXd& z, int old_mode, int new_mode) {
      if (old_mode == new_mode) return;
      const PllState s = pll(y);
      const double f_old = comparison_f(z, old_mode, s, *mp);
      const double f_new = comparison_f(z, new_mode, s, *mp);
      const Vec2 F_old = comparison_velocity(s, f_old, *mp);
      const Vec2 F_new = comparison_velocity(s, f_new, *mp);
      if (std::abs(F_old.y()) < 1e-300) return;
      const double r = y[3] / F_old.y();
      y[2] += (F_new.x() - F_old.x()) * r;
      y[3] += (F_new.y() - F_old.y()) * r;
    };
  }

  DaeEvent sw;
  sw.name = "domega";
  sw.fn = [](double, const VectorXd& y, const VectorXd&) { return y[1]; };
  sw.direction = 0;
  sw.action = DaeEvent::Action::Switch;

  DaeEvent band;
  band.name = "band";
  const double limit = std::numbers::pi - band_margin;
  band.fn = [limit](double, const VectorXd& y, const VectorXd&) { return std::abs(y[0]) - limit; };
  band.direction = 1;
  band.action = DaeEvent::Action::Terminate;

  d.events = {sw, band};
  return sys;
}

DaeState comparison_state(const ComparisonSystem& sys, PllState s, Vec2 prime) {
  VectorXd y(sys.dae.n_diff);
  y[0] = s.dtheta;
  y[1] = s.domega;
  if (sys.with_sensitivity) {
    y[2] = prime.x();
    y[3] = prime.y();
  }
  return make_consistent(sys.dae, 0.0, y, VectorXd());
}

}  // namespace lockin
