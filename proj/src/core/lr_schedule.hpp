#pragma once

#include "core/common.hpp"

namespace grushin {

/// p(gamma) of the uniform-observability constant e^(C (1 + T^-p)).
/// Defined for gamma in (0,1); gamma = 1 goes through the minimal-time path.
double p_exponent(double gamma);

/// log(e^a + e^b) without leaving log scale.
double logaddexp(double a, double b);

/// Dyadic time schedule: tau_j = K 2^(-j rho) with 2 K sum 2^(-j rho) = T,
/// i.e. K = T (2^rho - 1) / 2. Windows J_n = (T - alpha_n, T - alpha_(n-1))
/// with observation sub-intervals I_n in their later half.
struct LRSchedule {
  double T = 1.0;
  double gamma = 0.5;
  double rho = 0.25;
  double p = 0.0;          // p(gamma); NaN when built with an explicit rho for gamma = 1
  double K = 0.0;
  int depth = 0;           // materialized J
  bool admissible = false; // rho < min{(1-gamma)/(1+gamma), 1/p} verified

  std::vector<double> tau;      // tau[j-1], j = 1..depth
  std::vector<double> alpha;    // alpha[j], j = 0..depth (alpha[0] = 0)
  std::vector<std::pair<double, double>> I;  // I[n-1]
  std::vector<std::pair<double, double>> J;  // J[n-1]

  double tau_at(int n) const { return K * std::pow(2.0, -n * rho); }
  /// Partial-sum defect T - alpha_depth = T 2^(-depth rho).
  double truncation_defect() const { return T * std::pow(2.0, -depth * rho); }
};

/// Admissible schedule: rho = rho_fraction * min{(1-gamma)/(1+gamma), 1/p}.
LRSchedule build_schedule(double T, double gamma, double rho_fraction, int depth);

/// Schedule with a caller-chosen rho in (0,1). Admissibility is recorded, not
/// enforced; this is the entry point for the toy recursion presets.
LRSchedule build_schedule_explicit_rho(double T, double gamma, double rho, int depth);

/// lambda(2^n) = c_star 2^(2n / (1 + gamma)).
double lambda_cutoff(int n, double c_star, double gamma);

/// The delta / A / B recursion, carried entirely in log scale. B~_n peaks at
/// e^(C1 2^n)-size values before the dissipation term takes over, so linear
/// mirrors are exposed only where representable.
struct RecursionState {
  double C1 = 1.0, C2 = 1.0, C3 = 1.0, c_star = 1.0, gamma = 1.0;
  int N = 0;
  Vec log_delta, log_A, log_B, log_Btilde;  // entry i holds n = i+1
  int N0_delta2 = -1;   // first n with delta_m = 2 for every m in [n, N]
  int N1_A_const = -1;  // first n with A_m = A_n for every m in [n, N]
  int btilde_peak = 0;  // argmax of log_Btilde (1-based)
  bool regime_reached = false;

  double delta(int n) const { return std::exp(std::min(log_delta[n - 1], 700.0)); }
  double A(int n) const { return std::exp(std::min(log_A[n - 1], 700.0)); }
  double B(int n) const { return std::exp(std::min(log_B[n - 1], 700.0)); }
  double Btilde(int n) const { return std::exp(std::min(log_Btilde[n - 1], 700.0)); }
};

RecursionState run_recursion(const LRSchedule& schedule, double C1, double C2, double C3,
                             double c_star, double gamma, int N);

struct AssembledConstant {
  double log_delta_star = 0.0;
  double log_A_inf = 0.0;
  double log_C = 0.0;
  double C = 0.0;  // clamped exp of log_C
};

/// C = max{ delta*, sup_n A_n }; requires the recursion to have reached the
/// delta = 2 regime with A stabilized.
AssembledConstant assemble_constant(const RecursionState& state);

}  // namespace grushin
