#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lockin {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Scalar event function g(t, y, z); a sign change inside a step is located
/// by bisection on the dense output.
struct DaeEvent {
  enum class Action {
    Record,     // log and continue
    Switch,     // log, re-select the mode, apply the optional jump, continue
    Terminate,  // log and stop
  };

  std::string name;
  std::function<double(double t, const VectorXd& y, const VectorXd& z)> fn;
  /// +1: rising crossings only, -1: falling only, 0: both.
  int direction = 0;
  Action action = Action::Record;
};

/// Semi-explicit index-1 system
///   y' = rhs(t, y, z, mode),   0 = residual(t, y, z)
/// with a discrete `mode` that is frozen inside a step and only changes at
/// Switch events. A pure ODE has n_alg == 0.
struct SemiExplicitDae {
  int n_diff = 0;
  int n_alg = 0;

  std::function<void(double t, const VectorXd& y, const VectorXd& z, int mode, VectorXd& ydot)> rhs;
  std::function<void(double t, const VectorXd& y, const VectorXd& z, VectorXd& res)> residual;

  /// d residual / dz (n_alg x n_alg). Finite differences when empty.
  std::function<void(double t, const VectorXd& y, const VectorXd& z, MatrixXd& jac)> alg_jacobian;

  /// Optional structured solver for z given y and a guess; replaces the
  /// generic Newton iteration when present.
  std::function<VectorXd(double t, const VectorXd& y, const VectorXd& z_guess)> alg_solve;

  /// Mode at the start and after a Switch event. `crossing` is the sign of
  /// the event function's crossing (0 at the initial point).
  std::function<int(double t, const VectorXd& y, const VectorXd& z, int crossing)> select_mode;

  /// Optional state jump applied at a Switch event (e.g. saltation of
  /// variational variables). Called after the new mode is selected.
  std::function<void(double t, VectorXd& y, const VectorXd& z, int old_mode, int new_mode)> jump;

  std::vector<DaeEvent> events;
};

struct DaeState {
  double t = 0.0;
  VectorXd diff;
  VectorXd alg;
  int mode = 0;
};

struct StepOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  double h_min = 1e-12;
  double h_max = std::numeric_limits<double>::infinity();
  /// Algebraic solve tolerance, relative to 1 + |z|.
  double alg_tol = 1e-13;
  int alg_max_iterations = 30;
  /// Accepted steps must keep |residual| <= residual_check * (1 + |z|).
  double residual_check = 1e-10;
  /// Only the first `error_components` differential entries enter the error
  /// norm (all of them when negative).
  int error_components = -1;
};

/// One accepted Dormand-Prince 5(4) step plus what dense output needs.
struct StepResult {
  DaeState state;
  double h_used = 0.0;
  double h_next = 0.0;
  std::vector<VectorXd> stages;  // k1..k7
  VectorXd y0;
  VectorXd y1;
};

/// Solves residual(t, y, z) = 0 for z starting from `guess`.
/// Throws IndexViolation if the algebraic Jacobian is singular and
/// StepFailure if Newton does not converge.
VectorXd solve_algebraic(const SemiExplicitDae& dae, double t, const VectorXd& y,
                         const VectorXd& guess, const StepOptions& opts = {});

/// Makes (y, z) consistent and picks the initial mode.
DaeState make_consistent(const SemiExplicitDae& dae, double t, const VectorXd& y,
                         const VectorXd& z_guess, const StepOptions& opts = {});

/// One accepted step from a consistent state, retrying with smaller h on
/// rejection. The mode is frozen. Throws StepFailure below h_min.
StepResult step(const SemiExplicitDae& dae, const DaeState& state, double h_try,
                const StepOptions& opts = {});

/// Fourth-order continuous extension of an accepted step, theta in [0, 1].
VectorXd dense_output(const StepResult& s, double theta);

struct EventRecord {
  int index = -1;
  std::string name;
  double t = 0.0;
  int crossing = 0;
  VectorXd y;
  VectorXd z;
  int mode_before = 0;
  int mode_after = 0;
};

struct DaeSample {
  double t = 0.0;
  VectorXd y;
  VectorXd z;
  int mode = 0;
};

struct IntegrateOptions {
  StepOptions step;
  double h_initial = 0.0;  // 0: automatic
  /// Record samples at accepted steps and fill gaps to this spacing in t.
  bool record_samples = true;
  double max_sample_spacing = std::numeric_limits<double>::infinity();
  /// Event localization tolerance in t.
  double event_tol = 1e-10;
  long max_steps = 10'000'000;
  /// Called on each event; returning true stops the integration.
  std::function<bool(const EventRecord&)> on_event;
  /// Called after each accepted step (and after event restarts); returning
  /// true stops the integration.
  std::function<bool(const DaeState&)> on_step;
};

struct IntegrationResult {
  DaeState final_state;
  std::vector<DaeSample> samples;
  std::vector<EventRecord> events;
  bool terminated = false;  // Terminate event or callback stop
  long steps = 0;
  double h_last = 0.0;
};

/// Integrates from a consistent state to t_end with event location and
/// event-restart on Switch events.
IntegrationResult integrate(const SemiExplicitDae& dae, const DaeState& state0, double t_end,
                            const IntegrateOptions& opts = {});

}  // namespace lockin
