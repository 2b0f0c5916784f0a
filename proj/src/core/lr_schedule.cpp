#include "core/lr_schedule.hpp"

#include <algorithm>

namespace grushin {

double p_exponent(double gamma) {
  require(gamma > 0.0 && gamma < 1.0, Errc::invalid_argument,
          "p(gamma) requires gamma in (0,1); gamma = 1 uses the minimal-time path");
  if (gamma >= 0.5) return (1.0 + gamma) / (1.0 - gamma);
  return 2.0 * (1.0 + gamma) / (1.0 - 2.0 * gamma);
}

double logaddexp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

namespace {

LRSchedule materialize(double T, double gamma, double rho, double p, bool admissible,
                       int depth) {
  require(T > 0.0, Errc::invalid_argument, "T must be positive");
  require(depth >= 1, Errc::invalid_argument, "schedule depth must be >= 1");
  LRSchedule s;
  s.T = T;
  s.gamma = gamma;
  s.rho = rho;
  s.p = p;
  s.K = T * (std::pow(2.0, rho) - 1.0) / 2.0;  // closed form of 2K sum 2^(-j rho) = T
  s.depth = depth;
  s.admissible = admissible;
  s.tau.resize(depth);
  s.alpha.resize(depth + 1);
  s.alpha[0] = 0.0;
  for (int j = 1; j <= depth; ++j) {
    s.tau[j - 1] = s.tau_at(j);
    s.alpha[j] = s.alpha[j - 1] + 2.0 * s.tau[j - 1];
  }
  s.I.resize(depth);
  s.J.resize(depth);
  for (int n = 1; n <= depth; ++n) {
    const double right = T - s.alpha[n - 1];
    s.I[n - 1] = {right - s.tau[n - 1], right};
    s.J[n - 1] = {T - s.alpha[n], right};
  }
  return s;
}

}  // namespace

LRSchedule build_schedule(double T, double gamma, double rho_fraction, int depth) {
  require(rho_fraction > 0.0 && rho_fraction < 1.0, Errc::invalid_argument,
          "rho_fraction must lie in (0,1)");
  const double p = p_exponent(gamma);
  const double sup = std::min((1.0 - gamma) / (1.0 + gamma), 1.0 / p);
  const double rho = rho_fraction * sup;
  require(rho > 0.0 && rho < sup, Errc::invalid_argument, "rho out of the admissible interval");
  // key inequality used by the recursion's convergence steps
  require(2.0 / (1.0 + gamma) - rho > 1.0, Errc::verification,
          "schedule violates 2/(1+gamma) - rho > 1");
  return materialize(T, gamma, rho, p, true, depth);
}

LRSchedule build_schedule_explicit_rho(double T, double gamma, double rho, int depth) {
  require(rho > 0.0 && rho < 1.0, Errc::invalid_argument, "rho must lie in (0,1)");
  bool admissible = false;
  double p = std::numeric_limits<double>::quiet_NaN();
  if (gamma > 0.0 && gamma < 1.0) {
    p = p_exponent(gamma);
    admissible = rho < std::min((1.0 - gamma) / (1.0 + gamma), 1.0 / p);
  }
  return materialize(T, gamma, rho, p, admissible, depth);
}

double lambda_cutoff(int n, double c_star, double gamma) {
  require(n >= 1, Errc::invalid_argument, "n must be >= 1");
  require(c_star > 0.0, Errc::invalid_argument, "c_star must be positive");
  return c_star * std::pow(2.0, 2.0 * n / (1.0 + gamma));
}

RecursionState run_recursion(const LRSchedule& schedule, double C1, double C2, double C3,
                             double c_star, double gamma, int N) {
  require(C1 > 0 && C2 > 0 && C3 > 0 && c_star > 0, Errc::invalid_argument,
          "recursion constants must be positive");
  require(N >= 1 && N <= 64, Errc::invalid_argument, "depth N must lie in [1, 64]");
  RecursionState st;
  st.C1 = C1;
  st.C2 = C2;
  st.C3 = C3;
  st.c_star = c_star;
  st.gamma = gamma;
  st.N = N;
  st.log_delta.resize(N);
  st.log_A.resize(N);
  st.log_B.resize(N);
  st.log_Btilde.resize(N);

  const double log2 = std::log(2.0);
  const double decay_exp = std::log(2.0) * (schedule.rho + 2.0 / (1.0 + gamma));
  auto lam_tau = [&](int n) { return lambda_cutoff(n, c_star, gamma) * schedule.tau_at(n); };

  st.log_delta[0] = 0.0;  // delta_1 = 1
  st.log_A[0] = std::log(C2) - decay_exp;
  st.log_B[0] = std::log(C3) - lam_tau(1);
  st.log_Btilde[0] = st.log_B[0] + C1 * 2.0;

  for (int n = 1; n < N; ++n) {
    const double lt = lam_tau(n + 1);
    // delta_{n+1} = max{2, 1 + B_n e^(C1 2^n)}
    st.log_delta[n] = std::max(log2, logaddexp(0.0, st.log_Btilde[n - 1]));
    // A_{n+1} = max{A_n, B_n / lambda(2^(n+1)) + delta_{n+1} C2 2^(-(n+1)(rho + 2/(1+g)))}
    const double cand =
        logaddexp(st.log_B[n - 1] - std::log(lambda_cutoff(n + 1, c_star, gamma)),
                  st.log_delta[n] + std::log(C2) - (n + 1) * decay_exp);
    st.log_A[n] = std::max(st.log_A[n - 1], cand);
    // B_{n+1} = 2 B_n e^(-4 lam tau) + delta_{n+1} C3 e^(-lam tau)
    st.log_B[n] = logaddexp(log2 + st.log_B[n - 1] - 4.0 * lt,
                            st.log_delta[n] + std::log(C3) - lt);
    st.log_Btilde[n] = st.log_B[n] + C1 * std::pow(2.0, n + 1);
    require(st.log_Btilde[n] < 1e300, Errc::numerical,
            "B~ overflowed before the decay regime; increase T or c_star");
  }

  st.btilde_peak = 1;
  for (int n = 2; n <= N; ++n)
    if (st.log_Btilde[n - 1] > st.log_Btilde[st.btilde_peak - 1]) st.btilde_peak = n;

  // first index from which delta stays exactly 2 (the max picked the 2 branch)
  st.N0_delta2 = -1;
  for (int n = N; n >= 2; --n) {
    if (st.log_delta[n - 1] == log2) st.N0_delta2 = n;
    else break;
  }
  st.N1_A_const = -1;
  for (int n = N; n >= 1; --n) {
    if (st.log_A[n - 1] == st.log_A[N - 1]) st.N1_A_const = n;
    else break;
  }
  st.regime_reached = st.N0_delta2 > 0 && st.N1_A_const > 0 && st.N1_A_const < N;
  return st;
}

AssembledConstant assemble_constant(const RecursionState& state) {
  require(state.regime_reached, Errc::verification,
          "recursion did not reach the delta = 2 / stable-A regime within N; "
          "increase T, c_star, or the depth");
  AssembledConstant out;
  out.log_delta_star = state.log_delta.maxCoeff();
  out.log_A_inf = state.log_A[state.N - 1];
  out.log_C = std::max(out.log_delta_star, out.log_A_inf);
  out.C = std::exp(std::min(out.log_C, 700.0));
  return out;
}

}  // namespace grushin
