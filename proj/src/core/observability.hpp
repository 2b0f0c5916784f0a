#pragma once

#include "core/evolution.hpp"
#include "core/lr_schedule.hpp"
#include "core/spectral.hpp"

#include <memory>

namespace grushin {

/// Quadratic forms of the observability pencil,
///   A(u0) = ||u(T)||^2,   B(u0) = int_0^T int_omega |u|^2,
/// realized through backward-Euler trajectories of the mode systems.
///
/// The raw discrete pencil is unusable as stated: directions whose terminal
/// decay falls below rounding make B exactly singular at double precision, so
/// the sup runs into noise. The constant is therefore measured on the
/// dissipation-resolved subspace: per mode, generator eigendirections whose
/// one-step decay ratio against the slowest direction stays above e^-69 over
/// the horizon (terminal ratio >= 1e-60 on the squared form). A and B are
/// projected onto that basis (B matrix-free through the stepping), and the
/// pencil is solved there. Reported constants are lower estimates of the
/// discrete sup and converge with resolution wherever the continuum constant
/// is representable.
class ObsProblem {
 public:
  /// One mode system observed on omega1 (strip observation).
  ObsProblem(ModeOperator op, const IndexSet& omega1_x, double T, int steps);
  /// Stacked mode systems observed on omega1 x omega2; omega2 enters through
  /// the restricted y-mass matrix (identity for a strip).
  ObsProblem(std::vector<ModeOperator> ops, const IndexSet& omega1_x, Mat omega2_mass,
             double T, int steps);

  int dim() const { return nix_ * static_cast<int>(ops_.size()); }
  int reduced_dim() const { return static_cast<int>(basis_cols_.size()); }
  double T() const { return T_; }
  double quad_w() const { return wx_; }

  /// Full-space applications (matrix-free through the stepping).
  void apply_A(const Vec& u0, Vec& out) const;
  void apply_B(const Vec& u0, Vec& out) const;

  /// Projected forms on the resolved subspace. A_hat is diagonal and carries
  /// a log-scale normalization (see log_A_scale).
  const Vec& A_hat_diag() const { return A_hat_; }
  const Mat& B_hat() const { return B_hat_; }
  /// log of the factor removed from A_hat to keep it representable:
  /// true A = e^(log_A_scale) * A_hat on the subspace.
  double log_A_scale() const { return log_A_scale_; }
  /// Lift subspace coordinates back to a full initial state.
  Vec lift(const Vec& y) const;

 private:
  void init(const IndexSet& omega1_x, double T, int steps);
  void forward(const Vec& u0, Mat& states) const;
  void restrict_omega(const Vec& state, Vec& out) const;
  void build_reduced();

  std::vector<ModeOperator> ops_;
  std::vector<std::unique_ptr<ImplicitStepper>> steppers_;
  Mat omega2_mass_;  // modes x modes; empty means identity
  std::vector<char> x_mask_;
  double T_ = 0.0;
  double dt_ = 0.0;
  int steps_ = 0;
  int nix_ = 0;
  double wx_ = 0.0;

  struct BasisCol {
    int mode = 0;
    int eig = 0;
    double lambda = 0.0;
  };
  std::vector<Mat> eigvec_;          // per-mode eigenbasis of the generator
  std::vector<Vec> eigval_;
  std::vector<BasisCol> basis_cols_;
  Vec A_hat_;
  Mat B_hat_;
  double log_A_scale_ = 0.0;
  mutable Mat traj_buffer_;
};

struct ObsReport {
  double C_obs = 0.0;      // exp(log_C_obs), clamped to the double range
  double log_C_obs = 0.0;  // always finite; use this for slope fits
  int kept_dim = 0;        // pencil dimension after the visibility floor
  double residual = 0.0;   // projected pencil residual at the optimizer
  Vec optimizer;           // full-space initial state attaining C_obs
};

/// Largest generalized Rayleigh quotient A/B over the resolved subspace,
/// computed by a whitened dense eigensolve of the projected pencil. (An
/// iterative pencil solve with inner CG stalls on the Gramian's noise
/// subspace; see the ledger note on this deviation.)
ObsReport empirical_obs_constant(const ObsProblem& problem, double tol = 1e-8,
                                 int max_power = 400, std::uint64_t seed = 1234);

struct ModeObsRow {
  int n = 0;        // 1-based mode number
  double mu = 0.0;
  double C = 0.0;
  double log_C = 0.0;
};

/// Per-mode observability constants C_n for modes n_lo..n_hi (1-based).
std::vector<ModeObsRow> uniformity_study(const TensorGrid& grid, const ModeBasis& basis,
                                         double gamma, const CoefficientB& b,
                                         const IndexSet& omega1_x, double T, int n_lo,
                                         int n_hi, int steps, unsigned workers = 0);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
};

SlopeFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct MinimalTimeRow {
  double T = 0.0;
  double slope = 0.0;  // slope of log C_n against sqrt(mu_n)
  std::vector<ModeObsRow> rows;
};

struct ThresholdReport {
  double T_lo = 0.0;   // slope still positive here (below threshold)
  double T_hi = 0.0;   // slope nonpositive here (above threshold)
  double T_star_hat = 0.0;
  std::vector<MinimalTimeRow> evaluations;
};

/// gamma = 1 minimal-time scan: the sign of the slope of log C_n vs sqrt(mu_n)
/// flips across T*, located by bisection to the requested relative bracket.
ThresholdReport minimal_time_study(const TensorGrid& grid, const ModeBasis& basis,
                                   const CoefficientB& b, const IndexSet& omega1_x,
                                   int n_lo, int n_hi, double T_lo, double T_hi,
                                   double rel_bracket, int steps, unsigned workers = 0);

struct FullObsReport {
  ObsReport report;          // at n_modes
  double C_half_modes = 0.0; // at n_modes/2, for the truncation check
  double rel_change = 0.0;
  int n_modes = 0;
};

/// Observability of the tensor system truncated to n_modes, observed on a box.
FullObsReport full_observability_check(const TensorGrid& grid, const ModeBasis& basis,
                                       double gamma, const CoefficientB& b, const Box& omega,
                                       double T, int steps, int n_modes);

/// Calibrated surrogates feeding the recursion constants of the dyadic
/// scheme: C1 fitted from measured block observability constants, C2/C3 from
/// the schedule reductions they bound.
struct RecursionConstants {
  double C1 = 1.0;
  double C2 = 1.0;
  double C3 = 1.0;
  std::vector<std::pair<int, double>> block_constants;  // (j, log C_obs of E_j over tau_j)
};

RecursionConstants calibrate_recursion_constants(const TensorGrid& grid,
                                                 const ModeBasis& basis, double gamma,
                                                 const CoefficientB& b, const Box& omega,
                                                 const LRSchedule& schedule, double c_star,
                                                 int steps, const std::vector<int>& js = {2, 3, 4});

}  // namespace grushin
