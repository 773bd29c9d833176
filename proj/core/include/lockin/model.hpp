#pragma once

#include <array>
#include <complex>
#include <memory>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace lockin {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;

/// Phase-angle error (rad) and frequency error (rad/s) of the PLL.
struct PllState {
  double dtheta = 0.0;
  double domega = 0.0;
};

/// Current-controller error state: current errors and integrator errors.
using CcState = Vec4;

/// The state-dependent pieces of the PLL forcing term
///
///   f(dtheta, domega, x) = (g(dtheta, domega) - h(domega)^T x) / (mu - nu^T x).
///
/// Implementations must satisfy g(0, 0) == 0 and be pure.
class PllCoupling {
 public:
  virtual ~PllCoupling() = default;

  virtual double g(double dtheta, double domega) const = 0;
  /// (dg/ddtheta, dg/ddomega).
  virtual Vec2 g_grad(double dtheta, double domega) const = 0;
  virtual Vec4 h(double domega) const = 0;
  virtual Vec4 h_prime(double domega) const = 0;
};

/// Which sign of b enters the gradient of f with respect to x.
///   Printed: grad_x f = ( b + Hx) / (mu - nu^T x)^2
///   Derived: grad_x f = (-b + Hx) / (mu - nu^T x)^2
/// The model picks whichever one agrees with finite differences.
enum class GradientSign { Printed, Derived };

std::string_view to_string(GradientSign sign);

/// b = mu h - g nu, H = h nu^T - nu h^T and the partials of b.
struct CouplingTerms {
  Vec4 b;
  Mat4 H;
  Vec4 b_dtheta;
  Vec4 b_domega;
};

/// Cascade of a linear current controller x' = Ax driving the planar PLL
///   dtheta' = -k_p f + domega,  domega' = -k_i f.
///
/// Immutable after construction. The constructor validates the structural
/// constraints (k_p, k_i > 0, mu != 0, g(0,0) = 0) and resolves the gradient
/// sign by a finite-difference gate; it does not require A to be Hurwitz so
/// that `check` can report on arbitrary plug-ins.
class CascadeModel {
 public:
  CascadeModel(Mat4 A, double k_p, double k_i, double mu, Vec4 nu,
               std::shared_ptr<const PllCoupling> coupling, std::string name = "custom");

  const Mat4& A() const { return A_; }
  double k_p() const { return k_p_; }
  double k_i() const { return k_i_; }
  double mu() const { return mu_; }
  const Vec4& nu() const { return nu_; }
  const PllCoupling& coupling() const { return *coupling_; }
  const std::string& name() const { return name_; }
  GradientSign gradient_sign() const { return sign_; }

  double g(PllState s) const { return coupling_->g(s.dtheta, s.domega); }
  Vec4 h(PllState s) const { return coupling_->h(s.domega); }

  /// mu - nu^T x; throws SingularDenominator below 1e-9 |mu|.
  double denominator(const CcState& x) const;
  double singularity_floor() const { return 1e-9 * std::abs(mu_); }

  CouplingTerms terms(PllState s) const;

  /// sign * b + H x, the direction that the KKT stationarity condition
  /// P x = lambda * (sign * b + H x) uses.
  Vec4 kkt_direction(PllState s, const CcState& x) const;
  Vec4 kkt_direction(const CouplingTerms& t, const CcState& x) const;

  double sign_factor() const { return sign_ == GradientSign::Derived ? -1.0 : 1.0; }

 private:
  GradientSign resolve_gradient_sign() const;

  Mat4 A_;
  double k_p_;
  double k_i_;
  double mu_;
  Vec4 nu_;
  std::shared_ptr<const PllCoupling> coupling_;
  std::string name_;
  GradientSign sign_ = GradientSign::Derived;
};

struct FPartials {
  double f_dtheta = 0.0;
  double f_domega = 0.0;
  Vec4 grad_x = Vec4::Zero();
};

double eval_f(PllState s, const CcState& x, const CascadeModel& m);

FPartials eval_f_partials(PllState s, const CcState& x, const CascadeModel& m);

/// Gradient candidate for an explicit sign choice; used by the gate.
Vec4 grad_x_candidate(PllState s, const CcState& x, const CascadeModel& m, GradientSign sign);

/// (dtheta', domega', x') of the full closed loop.
Vec6 eval_rhs_full(PllState s, const CcState& x, const CascadeModel& m);

struct OscillationReport {
  std::array<std::complex<double>, 2> eigenvalues{};
  bool pass = false;
};

/// Linearization of the unforced PLL (x = 0) at the origin.
Mat2 pll_jacobian(const CascadeModel& m);

OscillationReport check_oscillatory(const Mat2& jacobian);
OscillationReport check_oscillatory(const CascadeModel& m);

std::array<std::complex<double>, 4> cc_eigenvalues(const Mat4& A);
double spectral_abscissa(const Mat4& A);
bool is_hurwitz(const Mat4& A);

/// Physical parameters of the grid-following inverter example.
struct InverterParams {
  double kappa_p = 1e-2;
  double kappa_i = 1.0;
  double L_f = 1e-3;
  double R_f = 4e-4;
  Vec2 i_dq_ref = Vec2(10.0, 0.0);
  double omega_g = 100.0 * 3.14159265358979323846;
  double L_g = 2e-3;
  double R_g = 6e-4;
  double v_g_norm = 325.0;
  double k_p = 3e-4;
  double k_i = 1e-4;

  /// "version-I" or "version-II"; throws ConfigInvalid otherwise.
  static InverterParams preset(std::string_view name);

  void validate() const;
};

/// Intermediate quantities of the default model, exposed for auditing.
struct InverterDerivation {
  double L = 0.0;       // L_f + L_g
  double R = 0.0;       // R_f + R_g
  double theta0 = 0.0;  // steady-state angle between PLL and grid frames
  Mat4 A = Mat4::Zero();
  double mu = 0.0;
  Vec4 nu = Vec4::Zero();
  Vec4 h0 = Vec4::Zero();  // h(0)
  Vec4 h_prime = Vec4::Zero();
};

InverterDerivation derive_inverter(const InverterParams& p);

/// SRF-PLL + dq PI current control error dynamics (see docs/default_model.md).
/// Throws ModelInvalid if the resulting A is not Hurwitz or mu == 0.
CascadeModel default_inverter_model(const InverterParams& p);

}  // namespace lockin
