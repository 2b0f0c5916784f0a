#pragma once

#include "core/evolution.hpp"
#include "core/spectral.hpp"

#include <memory>

namespace grushin {

/// Known time factor R(t, x) of the separated source g = R(t,x) f(x,y),
/// sampled at the solver's time nodes on the interior x rows.
struct SourceSpec {
  Mat R;     // nix x (steps+1)
  Mat dtR;   // same layout; centered differences of R when not supplied
  double T0 = 0.0;
  double T1 = 1.0;
  double dt = 0.0;
  int steps = 0;
  double R0 = 0.0;  // min_x R(T1, x)
  double V = 0.0;   // (int_{T0}^{T1} ||dtR||_inf^2 dt)^(1/2)
};

/// Builds the spec from a callable R(t, x_coords); dtR by centered differences.
SourceSpec make_source_spec(const TensorGrid& grid,
                            const std::function<double(double, const std::vector<double>&)>& R,
                            double T0, double T1, int steps);

struct SourceValidation {
  double R0 = 0.0;
  double V = 0.0;
  bool smallness_ok = true;  // V / R0 < eta
};

/// Checks R(T1,.) >= R0 > 0 (hard error otherwise) and reports the variation
/// smallness V/R0 < eta as a warning flag; the strip-case theory needs no
/// smallness, so violation is not an error.
SourceValidation validate_source_spec(const SourceSpec& spec, double eta);

struct Measurement {
  Mat dtu;          // (#window nodes) x (#omega nodes): du/dt samples on omega
  Vec g_uT1;        // stacked mode coefficients of G_gamma u(T1)
  double noise_level = 0.0;
  int window_k0 = 0;
  double dt = 0.0;
};

/// Matrix-free forward map f -> (du/dt on the window x omega, G_gamma u(T1))
/// for the truncated mode system, with its exact discrete adjoint. The state
/// f is mode-stacked: f[n * nix + i].
class ForwardMap {
 public:
  /// `mode_ids` selects which basis modes the stack carries (0-based).
  ForwardMap(const TensorGrid& grid, const ModeBasis& basis, double gamma,
             const CoefficientB& b, const Box& omega, SourceSpec spec,
             std::vector<int> mode_ids, Scheme scheme = Scheme::crank_nicolson);

  int f_dim() const { return nix_ * n_modes_; }
  int n_modes() const { return n_modes_; }
  int nix() const { return nix_; }
  double wx() const { return wx_; }
  const SourceSpec& spec() const { return spec_; }
  const std::vector<int>& omega_x_rows() const { return omega_rows_; }
  const IndexSet& omega2() const { return omega2_; }

  /// Forward measurement of f with initial state u0 (stacked; null = zero).
  Measurement apply(const Vec& f, const Vec* u0 = nullptr) const;
  /// F* m under the quadrature inner products. When `u0_adjoint` is given it
  /// receives the adjoint with respect to the initial state (the joint map
  /// (f, u0) -> measurement is linear in both).
  Vec apply_adjoint(const Measurement& m, Vec* u0_adjoint = nullptr) const;
  /// (F*F + lambda) f.
  Vec apply_normal(const Vec& f, double lambda_reg) const;

  /// du/dt over the FULL domain at T1 (stacked modes), for the pointwise
  /// stability-chain check.
  Vec dtu_at_T1(const Vec& f, const Vec* u0 = nullptr) const;

  double f_norm_sq(const Vec& f) const { return wx_ * f.squaredNorm(); }
  double measurement_norm_sq(const Measurement& m) const;
  double y1_norm_sq(const Measurement& m) const;
  double y2_norm_sq(const Measurement& m) const;
  Measurement measurement_diff(const Measurement& a, const Measurement& b) const;
  void add_noise(Measurement& m, double level, std::uint64_t seed) const;

  /// Samples f(x, y) into the stacked mode representation.
  Vec sample_f(const std::function<double(const std::vector<double>&, double)>& f) const;
  /// Back to a full tensor-grid field.
  Vec f_to_field(const Vec& f) const;

 private:
  void forward_states(const Vec& f, const Vec* u0, Mat& states) const;
  Vec mode_block(const Vec& stacked, int n) const { return stacked.segment(n * nix_, nix_); }

  const TensorGrid* grid_;
  const ModeBasis* basis_;
  SourceSpec spec_;
  Scheme scheme_;
  std::vector<int> mode_ids_;
  int n_modes_ = 0;
  int nix_ = 0;
  double wx_ = 0.0;
  double wy_ = 0.0;
  std::vector<ModeOperator> ops_;
  std::vector<std::unique_ptr<ImplicitStepper>> steppers_;
  std::vector<int> omega_rows_;  // interior rows inside omega1
  IndexSet omega2_;
  Mat phi_omega2_;               // |omega2| x n_modes eigenvector samples
  int k0_ = 0;                   // first window node
};

struct ReconstructionResult {
  Vec f_hat;               // stacked modes
  double lambda_reg = 0.0;
  int cg_iterations = 0;
  double cg_residual = 0.0;
  double lipschitz_ratio = 0.0;  // ||f_hat||^2 / measurement norm
};

/// Tikhonov-regularized least squares on the linear forward map, normal
/// equations solved by CG with matrix-free adjoints. u0, when nonzero, is
/// removed from the data by one auxiliary solve.
ReconstructionResult reconstruct_source(const ForwardMap& map, const Measurement& data,
                                        double lambda_reg, const Vec* u0 = nullptr,
                                        double cg_tol = 1e-12, int cg_maxit = 2000);

/// ||f||^2 / ( int int_omega |du/dt|^2 + ||G_gamma u(T1)||^2 ).
double lipschitz_ratio(const ForwardMap& map, const Vec& f, const Measurement& m);

struct Stab1Report {
  double lhs = 0.0;  // ||f||^2
  double rhs = 0.0;  // (2/R0^2) ( ||du/dt(T1)||^2 + ||G u(T1)||^2 )
  double margin = 0.0;
};

/// The pointwise stability chain ||f||^2 <= (2/R0^2)(||du/dt(T1)||^2 +
/// ||G u(T1)||^2), evaluated on a forward run.
Stab1Report stab1_check(const ForwardMap& map, const Vec& f, const Vec* u0 = nullptr);

/// Largest Lipschitz ratio sup_f ||f||^2 / ||F f||^2 = 1 / lambda_min(F*F),
/// by inverse power iteration on the normal operator with inner CG solves.
/// The returned value is a certified lower bound of the sup (Rayleigh value
/// of the final iterate).
double max_lipschitz_ratio(const ForwardMap& map, double tol = 1e-4, int max_outer = 60,
                           std::uint64_t seed = 4321);

/// Stability-constant probe with the initial state unknown, as in the
/// theorems: sup over (f, u0) of ||f||^2 / ||F(f, u0)||^2, by power iteration
/// on the pencil (||f||^2 form, joint normal operator). Certified lower
/// bound; this is the quantity whose gamma = 1 growth marks the minimal time.
double max_joint_lipschitz_ratio(const ForwardMap& map, double tol = 1e-4,
                                 int max_outer = 60, std::uint64_t seed = 4321);

struct ModeRatioRow {
  int n = 0;
  double mu = 0.0;
  double max_ratio = 0.0;
};

/// Per-mode Lipschitz ratios maximized over sources (inverse power on the
/// per-mode normal operator, random start), strip geometry.
std::vector<ModeRatioRow> uniform_mode_ratio_study(
    const TensorGrid& grid, const ModeBasis& basis, double gamma, const CoefficientB& b,
    const IndexSet& omega1_x, const SourceSpec& spec, int n_lo, int n_hi, int trials,
    std::uint64_t seed, unsigned workers = 0);

}  // namespace grushin
