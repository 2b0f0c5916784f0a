#pragma once

#include "core/evolution.hpp"
#include "core/lr_schedule.hpp"
#include "core/spectral.hpp"

#include <memory>

namespace grushin {

/// Which half of each block window carries the control.
enum class ControlLayout { active_first_half, active_second_half };

struct BlockReport {
  int j = 0;                  // block index
  std::size_t n_modes = 0;    // modes in E_j
  int k_begin = 0, k_mid = 0, k_end = 0;  // global node indices of the window
  double residual_before = 0.0;  // ||Pi_j u|| entering the block
  double residual_after = 0.0;   // ||Pi_j u|| at the end of the active phase
  double cost = 0.0;
  int cg_iterations = 0;
  double eps_pen = 0.0;
};

struct ControlReport {
  double u0_norm = 0.0;
  double final_norm = 0.0;     // ||u(T)||
  double cost = 0.0;           // ||g||^2 over (0,T) x omega
  std::vector<BlockReport> blocks;
};

struct ControlRun {
  ControlReport report;
  /// Physical control samples: (steps+1) x (|omega rows| * |omega2 nodes|);
  /// zero outside the active intervals by construction.
  Mat control;
  /// -1 for passive nodes, else the owning block j.
  std::vector<int> block_of_node;
  /// Mode-stacked state trajectory under the control.
  Mat states;  // f_dim x (steps+1)
};

/// Mode-stacked control system on a global backward-Euler time grid. Controls
/// are physical samples supported exactly on the omega nodes.
class ControlStack {
 public:
  ControlStack(const TensorGrid& grid, const ModeBasis& basis, double gamma,
               const CoefficientB& b, const Box& omega, double T, int steps, int n_modes);

  int f_dim() const { return nix_ * n_modes_; }
  int steps() const { return steps_; }
  double dt() const { return dt_; }
  double wx() const { return wx_; }
  int control_cols() const { return static_cast<int>(omega_rows_.size()) * omega2_.size(); }
  const ModeBasis& basis() const { return *basis_; }
  const std::vector<ModeOperator>& ops() const { return ops_; }

  double state_norm(const Vec& u) const { return std::sqrt(wx_ * u.squaredNorm()); }
  /// ||Pi_j u|| over the block's mode rows.
  double block_norm(const Vec& u, const std::vector<int>& block_rows) const;
  std::vector<int> block_rows(int j) const;  // stack rows of E_j members

  /// One backward-Euler step with optional physical control samples c.
  void step_forward(Vec& u, const Vec* c) const;
  /// Free decay across [k_from, k_to].
  void decay(Vec& u, int k_from, int k_to) const;

  /// Penalized minimal-norm control of Pi_j over nodes (k_begin, k_mid]:
  /// minimizes ||g||^2 + (1/eps) ||Pi_j u(k_mid)||^2 via CG on the penalized
  /// Gramian. Returns the control samples (one row per node in (k_begin,
  /// k_mid]) and advances `u` to k_mid.
  struct BlockControlResult {
    Mat control;  // (k_mid - k_begin) x control_cols
    double cost = 0.0;
    double residual = 0.0;  // ||Pi_j u(k_mid)||
    int cg_iterations = 0;
  };
  BlockControlResult block_control(Vec& u, const std::vector<int>& block_rows, int k_begin,
                                   int k_mid, double eps_pen) const;

  Vec sample_u0(const std::function<double(const std::vector<double>&, double)>& u0) const;

 private:
  Vec synthesize_on_omega(const Vec& u_block, const std::vector<int>& rows) const;
  Vec inject_control(const Vec& c, const std::vector<int>& rows) const;

  const TensorGrid* grid_;
  const ModeBasis* basis_;
  int n_modes_ = 0;
  int nix_ = 0;
  int steps_ = 0;
  double dt_ = 0.0;
  double wx_ = 0.0, wy_ = 0.0;
  std::vector<ModeOperator> ops_;
  std::vector<std::unique_ptr<ImplicitStepper>> steppers_;
  std::vector<int> omega_rows_;
  IndexSet omega2_;
  Mat phi_omega2_;  // |omega2| x n_modes
};

/// The dyadic null-control walk: for j = 1..J, drive Pi_j toward zero on the
/// active half of the j-th window, then decay freely on the passive half and
/// across the truncation tail (alpha_J, T).
ControlRun lr_null_control(const ControlStack& stack, const Vec& u0,
                           const LRSchedule& schedule, int n_blocks, double eps0,
                           ControlLayout layout = ControlLayout::active_first_half);

}  // namespace grushin
