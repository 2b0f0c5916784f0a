#pragma once

#include <Eigen/SparseCholesky>

#include "core/operators.hpp"

namespace grushin {

enum class Scheme { backward_euler, crank_nicolson };

const char* scheme_name(Scheme s);

/// Time-node samples of a linear evolution on a fixed spatial system.
/// states.col(k) is the solution at t0 + k*dt.
struct Trajectory {
  double t0 = 0.0;
  double dt = 0.0;
  int steps = 0;
  Scheme scheme = Scheme::crank_nicolson;
  std::string operator_id;
  Mat states;  // dim x (steps + 1)

  double time(int k) const { return t0 + dt * k; }
  int dim() const { return static_cast<int>(states.rows()); }
  void validate() const;
};

/// Source g(t) evaluated on demand at a time node. An empty function means
/// g = 0 throughout.
using SourceFn = std::function<Vec(double t)>;

/// One implicit step of u' = -A u + g. Both schemes have symmetric one-step
/// maps (shifted solves of the SPD matrix), which the adjoint sweeps in the
/// observability/inverse/control modules rely on.
class ImplicitStepper {
 public:
  ImplicitStepper(const SpMat& A, double dt, Scheme scheme);

  /// Advance u across one step; gk/gk1 are the source samples at the step's
  /// endpoints (null = zero).
  void step(Vec& u, const Vec* gk, const Vec* gk1) const;

  /// Solve (I + c A) x = b with the scheme's shift c.
  Vec solve_shifted(const Vec& b) const;
  /// Apply the explicit half (I - dt/2 A for CN, identity for BE).
  Vec apply_explicit(const Vec& u) const;

  double dt() const { return dt_; }
  Scheme scheme() const { return scheme_; }
  const SpMat& matrix() const { return *A_; }

 private:
  const SpMat* A_;
  double dt_;
  Scheme scheme_;
  SpMat lhs_;
  Eigen::SimplicialLLT<SpMat> solver_;
};

/// Implicit solve of u' = -A u + g to horizon T with step dt.
Trajectory solve_linear(const SpMat& A, const Vec& u0, const SourceFn& g, double T,
                        double dt, Scheme scheme, const std::string& operator_id = {});

/// Mode system (one frequency): interior-x vectors.
Trajectory solve_mode(const ModeOperator& op, const Vec& u0, const SourceFn& g, double T,
                      double dt, Scheme scheme);

/// Full tensor system: interior tensor vectors (use op.restrict_full /
/// extend_zero to cross to grid fields).
Trajectory solve_full(const FullOperator& op, const Vec& u0, const SourceFn& g, double T,
                      double dt, Scheme scheme);

/// v = du/dt recovered through the semi-discrete identity v = -A u + g.
/// The spatial system of `traj` must match A.
Trajectory time_derivative_trajectory(const Trajectory& traj, const SpMat& A,
                                      const SourceFn& g);

/// Trapezoid integral of t -> quad_w * ||u(t)||^2 over [t_lo, t_hi], with
/// linear interpolation of the integrand at the window ends.
double windowed_l2_sq(const Trajectory& traj, double quad_w, double t_lo, double t_hi);

struct DissipationReport {
  double lhs = 0.0;              // ||u(T)||^2
  double window_integral = 0.0;  // int_{T/3}^{2T/3} ||u||^2 dt
  double g_norm_sq = 0.0;        // ||g||^2 over (0,T) x Omega1
  double rhs = 0.0;
  double margin = 0.0;           // rhs - lhs
};

/// Margin of the Duhamel dissipation inequality
/// ||u(T)||^2 <= (6/T) e^(-2 lambda T / 3) int_{T/3}^{2T/3} ||u||^2 dt
///              + (1/lambda) ||g||^2.
DissipationReport dissipation_check(const Trajectory& traj, double lambda,
                                    const SourceFn& g, double quad_w);

}  // namespace grushin
