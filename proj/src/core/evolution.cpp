#include "core/evolution.hpp"

namespace grushin {

const char* scheme_name(Scheme s) {
  return s == Scheme::backward_euler ? "backward-euler" : "crank-nicolson";
}

void Trajectory::validate() const {
  require(states.allFinite(), Errc::numerical, "trajectory contains NaN/Inf entries");
}

ImplicitStepper::ImplicitStepper(const SpMat& A, double dt, Scheme scheme)
    : A_(&A), dt_(dt), scheme_(scheme) {
  require(dt > 0.0, Errc::invalid_argument, "time step must be positive");
  const double c = (scheme == Scheme::backward_euler) ? dt : 0.5 * dt;
  SpMat id(A.rows(), A.cols());
  id.setIdentity();
  lhs_ = id + c * A;
  solver_.compute(lhs_);
  require(solver_.info() == Eigen::Success, Errc::numerical,
          "implicit step factorization failed");
}

Vec ImplicitStepper::solve_shifted(const Vec& b) const {
  Vec x = solver_.solve(b);
  require(solver_.info() == Eigen::Success, Errc::numerical, "implicit step solve failed");
  return x;
}

Vec ImplicitStepper::apply_explicit(const Vec& u) const {
  if (scheme_ == Scheme::backward_euler) return u;
  return u - (0.5 * dt_) * (*A_ * u);
}

void ImplicitStepper::step(Vec& u, const Vec* gk, const Vec* gk1) const {
  Vec rhs = apply_explicit(u);
  if (scheme_ == Scheme::backward_euler) {
    if (gk1) rhs += dt_ * (*gk1);
  } else {
    if (gk) rhs += (0.5 * dt_) * (*gk);
    if (gk1) rhs += (0.5 * dt_) * (*gk1);
  }
  u = solve_shifted(rhs);
}

Trajectory solve_linear(const SpMat& A, const Vec& u0, const SourceFn& g, double T,
                        double dt, Scheme scheme, const std::string& operator_id) {
  require(T > 0.0, Errc::invalid_argument, "horizon must be positive");
  require(dt > 0.0 && dt <= T, Errc::invalid_argument, "invalid time step");
  require(u0.size() == A.rows(), Errc::invalid_argument, "state size mismatch");
  const int steps = static_cast<int>(std::llround(T / dt));
  require(std::abs(steps * dt - T) <= 1e-9 * T, Errc::invalid_argument,
          "horizon must be an integer number of steps");
  ImplicitStepper stepper(A, dt, scheme);
  Trajectory traj;
  traj.t0 = 0.0;
  traj.dt = dt;
  traj.steps = steps;
  traj.scheme = scheme;
  traj.operator_id = operator_id;
  traj.states.resize(u0.size(), steps + 1);
  traj.states.col(0) = u0;
  Vec u = u0;
  Vec gk, gk1;
  if (g) gk = g(0.0);
  for (int k = 0; k < steps; ++k) {
    const Vec* pk = nullptr;
    const Vec* pk1 = nullptr;
    if (g) {
      gk1 = g(dt * (k + 1));
      pk = &gk;
      pk1 = &gk1;
    }
    stepper.step(u, pk, pk1);
    traj.states.col(k + 1) = u;
    if (g) gk.swap(gk1);
  }
  traj.validate();
  return traj;
}

Trajectory solve_mode(const ModeOperator& op, const Vec& u0, const SourceFn& g, double T,
                      double dt, Scheme scheme) {
  return solve_linear(op.A, u0, g, T, dt, scheme,
                      "mode mu=" + std::to_string(op.mu));
}

Trajectory solve_full(const FullOperator& op, const Vec& u0, const SourceFn& g, double T,
                      double dt, Scheme scheme) {
  return solve_linear(op.A, u0, g, T, dt, scheme, "full");
}

Trajectory time_derivative_trajectory(const Trajectory& traj, const SpMat& A,
                                      const SourceFn& g) {
  Trajectory v = traj;
  v.operator_id = traj.operator_id + " d/dt";
  for (int k = 0; k <= traj.steps; ++k) {
    Vec vk = -(A * traj.states.col(k));
    if (g) vk += g(traj.time(k));
    v.states.col(k) = vk;
  }
  v.validate();
  return v;
}

double windowed_l2_sq(const Trajectory& traj, double quad_w, double t_lo, double t_hi) {
  require(t_hi > t_lo, Errc::invalid_argument, "empty time window");
  const double t_end = traj.t0 + traj.dt * traj.steps;
  require(t_lo >= traj.t0 - 1e-12 && t_hi <= t_end + 1e-12, Errc::invalid_argument,
          "window exceeds the trajectory span");
  // scalar series e(t_k) = quad_w ||u_k||^2, integrated by trapezoid with the
  // window ends interpolated linearly.
  auto e_at = [&](int k) { return quad_w * traj.states.col(k).squaredNorm(); };
  auto e_interp = [&](double t) {
    double s = (t - traj.t0) / traj.dt;
    int k = std::min(static_cast<int>(std::floor(s)), traj.steps - 1);
    k = std::max(k, 0);
    double frac = s - k;
    return (1.0 - frac) * e_at(k) + frac * e_at(k + 1);
  };
  const int k_first = static_cast<int>(std::ceil((t_lo - traj.t0) / traj.dt - 1e-12));
  const int k_last = static_cast<int>(std::floor((t_hi - traj.t0) / traj.dt + 1e-12));
  double acc = 0.0;
  if (k_first > k_last) {
    // window inside one cell
    acc = 0.5 * (e_interp(t_lo) + e_interp(t_hi)) * (t_hi - t_lo);
    return acc;
  }
  const double t_first = traj.t0 + k_first * traj.dt;
  const double t_last = traj.t0 + k_last * traj.dt;
  if (t_first > t_lo)
    acc += 0.5 * (e_interp(t_lo) + e_at(k_first)) * (t_first - t_lo);
  for (int k = k_first; k < k_last; ++k) acc += 0.5 * (e_at(k) + e_at(k + 1)) * traj.dt;
  if (t_hi > t_last) acc += 0.5 * (e_at(k_last) + e_interp(t_hi)) * (t_hi - t_last);
  return acc;
}

DissipationReport dissipation_check(const Trajectory& traj, double lambda,
                                    const SourceFn& g, double quad_w) {
  require(lambda > 0.0, Errc::invalid_argument, "lambda must be positive");
  const double T = traj.dt * traj.steps;
  DissipationReport rep;
  rep.lhs = quad_w * traj.states.col(traj.steps).squaredNorm();
  rep.window_integral = windowed_l2_sq(traj, quad_w, T / 3.0, 2.0 * T / 3.0);
  if (g) {
    // trapezoid in time of quad_w ||g(t_k)||^2
    double acc = 0.0;
    for (int k = 0; k <= traj.steps; ++k) {
      const double wt = (k == 0 || k == traj.steps) ? 0.5 * traj.dt : traj.dt;
      acc += wt * quad_w * g(traj.time(k)).squaredNorm();
    }
    rep.g_norm_sq = acc;
  }
  rep.rhs = (6.0 / T) * std::exp(-2.0 * lambda * T / 3.0) * rep.window_integral +
            rep.g_norm_sq / lambda;
  rep.margin = rep.rhs - rep.lhs;
  return rep;
}

}  // namespace grushin
