#include "lockin/gauge.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "lockin/error.hpp"

namespace lockin {

Mat4 solve_lyapunov(const Mat4& A, const Mat4& Q) {
  // Column-major vec: vec(A^T X + X A) = (I (x) A^T + A^T (x) I) vec(X).
  using Mat16 = Eigen::Matrix<double, 16, 16>;
  const Mat4 At = A.transpose();
  Mat16 K = Mat16::Zero();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      K.block<4, 4>(4 * j, 4 * j) += (i == j ? 1.0 : 0.0) * At;
      K.block<4, 4>(4 * i, 4 * j) += At(i, j) * Mat4::Identity();
    }
  }
  Eigen::Matrix<double, 16, 1> rhs;
  for (int j = 0; j < 4; ++j) {
    for (int i = 0; i < 4; ++i) rhs[4 * j + i] = -Q(i, j);
  }
  const Eigen::Matrix<double, 16, 1> v = K.fullPivLu().solve(rhs);
  Mat4 X;
  for (int j = 0; j < 4; ++j) {
    for (int i = 0; i < 4; ++i) X(i, j) = v[4 * j + i];
  }
  return 0.5 * (X + X.transpose());
}

Gauge make_gauge(const Mat4& A, const Mat4& P, double gamma) {
  if (!(gamma > 0.0)) throw Error(ErrorKind::GaugeInfeasible, "decay rate must be positive");
  Gauge g;
  g.P = 0.5 * (P + P.transpose());
  g.gamma = gamma;

  Eigen::LLT<Mat4> llt(g.P);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::GaugeInfeasible, "P is not positive definite");
  }
  g.chol_L = llt.matrixL();
  g.P_inv = llt.solve(Mat4::Identity());
  g.P_inv = 0.5 * (g.P_inv + g.P_inv.transpose());

  const Mat4 S = A.transpose() * g.P + g.P * A + gamma * g.P;
  Eigen::SelfAdjointEigenSolver<Mat4> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
  g.decay_margin = es.eigenvalues().maxCoeff();
  if (!(g.decay_margin < 0.0)) {
    std::ostringstream os;
    os << "A^T P + P A + gamma P has eigenvalue " << g.decay_margin << " >= 0";
    throw Error(ErrorKind::GaugeInfeasible, os.str());
  }
  return g;
}

Gauge build_gauge(const Mat4& A, double margin) {
  if (!(margin > 0.0 && margin < 1.0)) {
    throw Error(ErrorKind::ConfigInvalid, "gauge margin must lie in (0, 1)");
  }
  const double abscissa = spectral_abscissa(A);
  if (!(abscissa < 0.0)) {
    std::ostringstream os;
    os << "spectral abscissa " << abscissa << " >= 0";
    throw Error(ErrorKind::NotHurwitz, os.str());
  }
  const double gamma = 2.0 * (1.0 - margin) * std::abs(abscissa);
  const Mat4 shifted = A + 0.5 * gamma * Mat4::Identity();
  const Mat4 P = solve_lyapunov(shifted, Mat4::Identity());
  return make_gauge(A, P, gamma);
}

double v_cc(const CcState& x, const Gauge& gauge) { return x.dot(gauge.P * x); }

CcState ellipsoid_point(const Gauge& gauge, double V, const Vec4& u) {
  const Vec4 w = gauge.chol_L.transpose().triangularView<Eigen::Upper>().solve(u);
  return std::sqrt(std::max(V, 0.0)) * w;
}

double singularity_clearance(const Gauge& gauge, const CascadeModel& m, double eps_margin) {
  const double q = m.nu().dot(gauge.P_inv * m.nu());
  if (q <= 0.0) return kUnbounded;
  const double reach = (1.0 - eps_margin) * m.mu();
  return reach * reach / q;
}

}  // namespace lockin
