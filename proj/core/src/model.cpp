#include "lockin/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "lockin/error.hpp"

namespace lockin {

namespace {

class InverterCoupling final : public PllCoupling {
 public:
  InverterCoupling(const InverterParams& p, const InverterDerivation& d)
      : v_g_(p.v_g_norm),
        theta0_(d.theta0),
        L_g_(p.L_g),
        i_d_ref_(p.i_dq_ref.x()),
        h0_(d.h0),
        h_prime_(d.h_prime) {}

  double g(double dtheta, double domega) const override {
    // sin(theta0 + dtheta) - sin(theta0) written to stay exact at dtheta = 0.
    const double dsin = 2.0 * std::cos(theta0_ + 0.5 * dtheta) * std::sin(0.5 * dtheta);
    return v_g_ * dsin - domega * L_g_ * i_d_ref_;
  }

  Vec2 g_grad(double dtheta, double /*domega*/) const override {
    return {v_g_ * std::cos(theta0_ + dtheta), -L_g_ * i_d_ref_};
  }

  Vec4 h(double domega) const override { return h0_ + domega * h_prime_; }
  Vec4 h_prime(double /*domega*/) const override { return h_prime_; }

 private:
  double v_g_;
  double theta0_;
  double L_g_;
  double i_d_ref_;
  Vec4 h0_;
  Vec4 h_prime_;
};

double relative_error(const Vec4& a, const Vec4& b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (a - b).norm() / scale;
}

}  // namespace

std::string_view to_string(GradientSign sign) {
  return sign == GradientSign::Printed ? "printed(+b)" : "derived(-b)";
}

CascadeModel::CascadeModel(Mat4 A, double k_p, double k_i, double mu, Vec4 nu,
                           std::shared_ptr<const PllCoupling> coupling, std::string name)
    : A_(std::move(A)),
      k_p_(k_p),
      k_i_(k_i),
      mu_(mu),
      nu_(std::move(nu)),
      coupling_(std::move(coupling)),
      name_(std::move(name)) {
  if (!coupling_) throw Error(ErrorKind::ModelInvalid, "missing PLL coupling");
  if (!(k_p_ > 0.0) || !(k_i_ > 0.0)) {
    throw Error(ErrorKind::ModelInvalid, "PLL gains must be positive");
  }
  if (mu_ == 0.0 || !std::isfinite(mu_)) throw Error(ErrorKind::ModelInvalid, "mu must be nonzero");
  if (!A_.allFinite() || !nu_.allFinite()) {
    throw Error(ErrorKind::ModelInvalid, "non-finite A or nu");
  }
  if (coupling_->g(0.0, 0.0) != 0.0) {
    throw Error(ErrorKind::ModelInvalid, "g(0,0) must vanish");
  }
  sign_ = resolve_gradient_sign();
}

double CascadeModel::denominator(const CcState& x) const {
  const double d = mu_ - nu_.dot(x);
  if (std::abs(d) < singularity_floor()) {
    std::ostringstream os;
    os << "|mu - nu^T x| = " << std::abs(d) << " below floor " << singularity_floor();
    throw Error(ErrorKind::SingularDenominator, os.str());
  }
  return d;
}

CouplingTerms CascadeModel::terms(PllState s) const {
  const Vec4 h = coupling_->h(s.domega);
  const Vec4 hp = coupling_->h_prime(s.domega);
  const double g = coupling_->g(s.dtheta, s.domega);
  const Vec2 gg = coupling_->g_grad(s.dtheta, s.domega);
  CouplingTerms t;
  t.b = mu_ * h - g * nu_;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) t.H(i, j) = h[i] * nu_[j] - nu_[i] * h[j];
  }
  t.b_dtheta = -gg.x() * nu_;
  t.b_domega = mu_ * hp - gg.y() * nu_;
  return t;
}

Vec4 CascadeModel::kkt_direction(const CouplingTerms& t, const CcState& x) const {
  return sign_factor() * t.b + t.H * x;
}

Vec4 CascadeModel::kkt_direction(PllState s, const CcState& x) const {
  return kkt_direction(terms(s), x);
}

GradientSign CascadeModel::resolve_gradient_sign() const {
  // Central differences of f at a few admissible points decide which
  // printed form of grad_x f is the real one.
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double nu_l1 = nu_.lpNorm<1>();
  const double scale = nu_l1 > 0.0 ? std::min(1.0, 0.5 * std::abs(mu_) / nu_l1) : 1.0;

  int derived_ok = 0;
  int printed_ok = 0;
  int informative = 0;
  constexpr int kPoints = 16;
  for (int k = 0; k < kPoints; ++k) {
    const PllState s{unit(rng), unit(rng)};
    Vec4 x;
    for (int i = 0; i < 4; ++i) x[i] = scale * unit(rng);

    Vec4 fd;
    for (int i = 0; i < 4; ++i) {
      const double step = 1e-5 * scale;
      Vec4 xp = x, xm = x;
      xp[i] += step;
      xm[i] -= step;
      fd[i] = (eval_f(s, xp, *this) - eval_f(s, xm, *this)) / (2.0 * step);
    }
    const Vec4 printed = grad_x_candidate(s, x, *this, GradientSign::Printed);
    const Vec4 derived = grad_x_candidate(s, x, *this, GradientSign::Derived);
    if ((printed - derived).norm() <= 1e-9 * std::max(fd.norm(), 1e-300)) continue;
    ++informative;
    if (relative_error(derived, fd) < 1e-6) ++derived_ok;
    if (relative_error(printed, fd) < 1e-6) ++printed_ok;
  }
  if (informative == 0 || derived_ok == informative) return GradientSign::Derived;
  if (printed_ok == informative) return GradientSign::Printed;
  throw Error(ErrorKind::ModelInvalid,
              "neither gradient sign matches finite differences of f; coupling partials are "
              "inconsistent");
}

double eval_f(PllState s, const CcState& x, const CascadeModel& m) {
  const double den = m.denominator(x);
  return (m.g(s) - m.h(s).dot(x)) / den;
}

Vec4 grad_x_candidate(PllState s, const CcState& x, const CascadeModel& m, GradientSign sign) {
  const double den = m.denominator(x);
  const CouplingTerms t = m.terms(s);
  const double sgn = sign == GradientSign::Derived ? -1.0 : 1.0;
  return (sgn * t.b + t.H * x) / (den * den);
}

FPartials eval_f_partials(PllState s, const CcState& x, const CascadeModel& m) {
  const double den = m.denominator(x);
  const Vec2 gg = m.coupling().g_grad(s.dtheta, s.domega);
  const Vec4 hp = m.coupling().h_prime(s.domega);
  FPartials p;
  p.f_dtheta = gg.x() / den;
  p.f_domega = (gg.y() - hp.dot(x)) / den;
  p.grad_x = m.kkt_direction(s, x) / (den * den);
  return p;
}

Vec6 eval_rhs_full(PllState s, const CcState& x, const CascadeModel& m) {
  const double f = eval_f(s, x, m);
  Vec6 out;
  out[0] = -m.k_p() * f + s.domega;
  out[1] = -m.k_i() * f;
  out.tail<4>() = m.A() * x;
  return out;
}

Mat2 pll_jacobian(const CascadeModel& m) {
  const FPartials p = eval_f_partials(PllState{}, CcState::Zero(), m);
  Mat2 J;
  J << -m.k_p() * p.f_dtheta, 1.0 - m.k_p() * p.f_domega,
       -m.k_i() * p.f_dtheta, -m.k_i() * p.f_domega;
  return J;
}

OscillationReport check_oscillatory(const Mat2& J) {
  const double tr = J.trace();
  const double det = J.determinant();
  const std::complex<double> disc = std::sqrt(std::complex<double>(tr * tr - 4.0 * det, 0.0));
  OscillationReport r;
  r.eigenvalues[0] = 0.5 * (tr + disc);
  r.eigenvalues[1] = 0.5 * (tr - disc);
  const bool non_real = tr * tr - 4.0 * det < 0.0;
  r.pass = non_real && r.eigenvalues[0].real() < 0.0;
  return r;
}

OscillationReport check_oscillatory(const CascadeModel& m) { return check_oscillatory(pll_jacobian(m)); }

std::array<std::complex<double>, 4> cc_eigenvalues(const Mat4& A) {
  Eigen::EigenSolver<Mat4> es(A, false);
  std::array<std::complex<double>, 4> out{};
  for (int i = 0; i < 4; ++i) out[i] = es.eigenvalues()[i];
  std::sort(out.begin(), out.end(), [](auto a, auto b) {
    return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
  });
  return out;
}

double spectral_abscissa(const Mat4& A) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& ev : cc_eigenvalues(A)) best = std::max(best, ev.real());
  return best;
}

bool is_hurwitz(const Mat4& A) { return spectral_abscissa(A) < 0.0; }

InverterParams InverterParams::preset(std::string_view name) {
  InverterParams p;
  if (name == "version-I") {
    p.k_p = 3e-4;
    p.k_i = 1e-4;
  } else if (name == "version-II") {
    p.k_p = 3e-3;
    p.k_i = 1e-2;
  } else {
    throw Error(ErrorKind::ConfigInvalid, "unknown preset '" + std::string(name) + "'");
  }
  return p;
}

void InverterParams::validate() const {
  const double positives[] = {kappa_p, kappa_i, L_f, R_f, omega_g, L_g, R_g, v_g_norm, k_p, k_i};
  for (double v : positives) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorKind::ConfigInvalid, "inverter parameters must be positive and finite");
    }
  }
  if (!i_dq_ref.allFinite()) throw Error(ErrorKind::ConfigInvalid, "non-finite current reference");
}

InverterDerivation derive_inverter(const InverterParams& p) {
  p.validate();
  InverterDerivation d;
  d.L = p.L_f + p.L_g;
  d.R = p.R_f + p.R_g;

  // PI current loop on the total series impedance in the PLL frame:
  //   L e' = -(R + kappa_p) e + kappa_i xi,   xi' = -e.
  const double a = (d.R + p.kappa_p) / d.L;
  const double c = p.kappa_i / d.L;
  d.A << -a, 0.0, c, 0.0,
         0.0, -a, 0.0, c,
         -1.0, 0.0, 0.0, 0.0,
         0.0, -1.0, 0.0, 0.0;

  const double i_d = p.i_dq_ref.x();
  const double i_q = p.i_dq_ref.y();
  const double s0 = (p.R_g * i_q + p.omega_g * p.L_g * i_d) / p.v_g_norm;
  if (std::abs(s0) >= 1.0) {
    throw Error(ErrorKind::ModelInvalid, "no synchronous equilibrium: grid drop exceeds |v_g|");
  }
  d.theta0 = std::asin(s0);

  // The PLL frequency enters the q-axis drop across L_g, giving the
  // denominator 1 - k_p L_g i_d.
  d.mu = 1.0 - p.k_p * p.L_g * i_d;
  d.nu = Vec4(p.k_p * p.L_g, 0.0, 0.0, 0.0);

  // q-axis PCC voltage deviation: R_g e_q + L_g e_q' + (omega_g + domega) L_g e_d.
  d.h0 = Vec4(p.omega_g * p.L_g, p.R_g, 0.0, 0.0) + p.L_g * d.A.row(1).transpose();
  d.h_prime = Vec4(p.L_g, 0.0, 0.0, 0.0);
  return d;
}

CascadeModel default_inverter_model(const InverterParams& p) {
  const InverterDerivation d = derive_inverter(p);
  if (!is_hurwitz(d.A)) throw Error(ErrorKind::ModelInvalid, "current-loop matrix A is not Hurwitz");
  if (d.mu == 0.0) throw Error(ErrorKind::ModelInvalid, "mu vanishes for this operating point");
  auto coupling = std::make_shared<InverterCoupling>(p, d);
  CascadeModel m(d.A, p.k_p, p.k_i, d.mu, d.nu, std::move(coupling), "srf-pll-inverter");
  if (m.g(PllState{}) != 0.0) throw Error(ErrorKind::ModelInvalid, "g(0,0) != 0");
  return m;
}

}  // namespace lockin
