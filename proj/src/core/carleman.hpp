#pragma once

#include "core/domain.hpp"
#include "core/evolution.hpp"

namespace grushin {

/// Sign + log-magnitude pair. The weight derivatives carry factors e^(lambda
/// psi) that overflow doubles for paper-mode lambda, so every comparison is
/// done on this representation.
struct SignedLog {
  int sign = 0;          // -1, 0, +1
  double log_abs = -kInf;

  static SignedLog from_value(double v) {
    if (v == 0.0) return {0, -kInf};
    return {v > 0.0 ? 1 : -1, std::log(std::abs(v))};
  }
  /// value * e^(log_factor)
  static SignedLog from_scaled(double value, double log_factor) {
    if (value == 0.0) return {0, -kInf};
    return {value > 0.0 ? 1 : -1, std::log(std::abs(value)) + log_factor};
  }
  double to_double() const {  // clamped to the double range
    if (sign == 0) return 0.0;
    return sign * std::exp(std::min(log_abs, 700.0));
  }
};

/// e^p1 - e^p0 without leaving log scale.
SignedLog log_exp_diff(double p1, double p0);

/// Weight-generator function psi of the Carleman construction: positive
/// inside, zero on the boundary, gradient bounded away from zero outside
/// omega1_tilde. Built analytically (tilted parabola per axis), so the
/// derivative samples are exact.
struct PsiFunction {
  const TensorGrid* grid = nullptr;
  Box omega1_tilde_box;
  IndexSet omega1_tilde;      // interior x nodes inside the box
  Vec psi;                    // nx samples
  Mat grad;                   // nx x dim_x
  Mat hess;                   // nx x (1 or 3): [xx] or [xx, xy, yy]
  double psi_max = 0.0;       // ||psi||_inf over the grid
  double m_star = 0.0;        // min |grad psi| outside omega1_tilde
  double m_upper = 0.0;       // max of |grad|, |lap|, ||D2|| outside

  bool node_outside_tilde(int ix) const;  // in the closure minus the box
  double lap(int ix) const;
  /// Nodes of the closure minus omega1_tilde entering the min/max bounds.
  /// 2D corners are skipped: psi vanishes there to second order by
  /// construction of the product bump, which only rules out rectangle
  /// corner points (measure zero, outside the paper's smooth-boundary set).
  std::vector<int> outside_nodes() const;
};

PsiFunction construct_psi(const TensorGrid& grid, const Box& omega1_tilde_box);

enum class WeightMode { paper, search };

/// Carleman weight beta = e^(2 lambda ||psi||) - e^(lambda psi) with its
/// certificate constants. All beta values are kept as logs.
struct CarlemanWeight {
  double a = 2.0;
  double lambda = 0.0;
  double C1 = 0.0;
  double C3 = 0.0;
  WeightMode mode = WeightMode::search;
  const PsiFunction* psi = nullptr;
  Vec log_beta;               // per x node
  double log_beta_max = 0.0;  // log beta^* (max over Omega1)

  /// log of min beta over an index set (beta_* when given omega1).
  double log_beta_min(const IndexSet& set) const;
  /// Linear beta sample; errors when it would overflow.
  double beta_linear(int ix) const;
  /// Signed-log second derivative data, see carleman.cpp.
  SignedLog beta_second(int ix) const;
};

CarlemanWeight calibrate_weight(const PsiFunction& psi, double a, WeightMode mode,
                                double lambda_max = 1e7);

/// Weight with a caller-chosen lambda and no certificate: C1/C3 are the
/// achieved margins when positive, zero otherwise. Used where only the
/// conjugation identity matters (e.g. the P1/P2/P3 split on benign scales).
CarlemanWeight weight_with_lambda(const PsiFunction& psi, double a, double lambda);

struct WeightVerification {
  bool boundary_ok = false;
  bool ii_ok = false;   // (1-a)(lap beta)|Z|^2 - 2 D2beta(Z,Z) >= C1 |Z|^2
  bool iii_ok = false;  // (a-1)(lap beta)|grad beta|^2 - 2 D2beta(grad,grad) >= C3
  double min_log_ratio_ii = kInf;    // min over nodes of log(lhs / C1)
  double min_log_ratio_iii = kInf;
  SignedLog min_boundary;            // min outward derivative of beta
  std::vector<int> offending_nodes;

  bool all_ok() const { return boundary_ok && ii_ok && iii_ok; }
};

/// Node-wise margins of the weight inequalities; set `strict` to raise a
/// verification error listing the offending nodes.
WeightVerification verify_weight_inequalities(const CarlemanWeight& w, bool strict = false);

/// M = C2 max{T + T^2, mu^q T^2} with q = 1/2 for gamma in [1/2, 1] and
/// q = 2/3 for gamma in (0, 1/2).
double carleman_M(double T, double mu, double gamma, double C2);

/// epsilon branch of the P1/P2/P3 split: 1 for gamma in [1/2,1], else 0.
int epsilon_branch(double gamma);

struct CarlemanParams {
  double T0 = 0.0;
  double T1 = 1.0;
  double T = 1.0;  // T1 - T0
  double mu = 0.0;
  double gamma = 0.5;
  int epsilon = 1;
  double C2 = 1.0;
  double M = 0.0;

  /// alpha(t, x) = beta(x) / ((t - T0)(T1 - t)); callers use s(t) directly.
  double s(double t) const { return (t - T0) * (T1 - t); }
};

CarlemanParams make_carleman_params(double T0, double T1, double mu, double gamma, double C2);

struct CarlemanRatioReport {
  bool null_case = false;   // both sides vanished identically
  double log_lhs = -kInf;
  double log_rhs = -kInf;
  double ratio = 0.0;       // exp(log_lhs - log_rhs); <= 1 means the estimate holds
  double edge_log_weight = -kInf;  // max exponent -M alpha at the first/last interior node
};

/// Empirical Carleman ratio LHS/RHS of the weighted estimate for one window
/// trajectory of the mode system. `Pu` holds the parabolic operator applied
/// to u at each time node (equal to the source samples for solutions of the
/// mode equation). The trajectory must span exactly [T0, T1].
CarlemanRatioReport carleman_ratio(const ModeOperator& op, const Trajectory& u,
                                   const Mat& Pu, const CarlemanWeight& w,
                                   const CarlemanParams& p, const IndexSet& omega1_x,
                                   double C1_cal);

struct P123Decomposition {
  Mat P1, P2, P3;        // dim x (steps+1), endpoints zeroed
  double residual = 0.0; // L2 norm of P1+P2+P3 - e^(-M alpha) P_mu_gamma(u)
  int epsilon = 1;
};

/// Discrete split of the conjugated operator on a window field z = u e^(-M
/// alpha). Linear-scale evaluation: requires a representable weight (benign
/// lambda); production-size weights go through carleman_ratio instead.
P123Decomposition decompose_P123(const ModeOperator& op, const Mat& z, double dt,
                                 const CarlemanWeight& w, const CarlemanParams& p);

}  // namespace grushin
