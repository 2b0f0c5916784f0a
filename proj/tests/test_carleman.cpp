#include <doctest.h>

#include "core/carleman.hpp"

using namespace grushin;

namespace {

TensorGrid unit_grid(int n) {
  return build_tensor_grid({build_interval_grid(0.0, 1.0, n)},
                           build_interval_grid(0.0, 1.0, 5)); 
}

Box box1(double lo, double hi) {
  Box b;
  b.intervals = {{lo, hi}};
  return b;
}

}  // namespace

TEST_CASE("psi on (0,1) with centered omega1_tilde is x(1-x)") {
  TensorGrid grid = unit_grid(11);
  PsiFunction psi = construct_psi(grid, box1(0.4, 0.6));
  for (int i = 0; i < 11; ++i) {
    const double x = grid.grids_x[0].nodes[i];
    CHECK(psi.psi[i] == doctest::Approx(x * (1.0 - x)).epsilon(1e-14));
  }
  CHECK(psi.m_star == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(psi.m_upper == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(psi.psi[0] == 0.0);
  CHECK(psi.psi[10] == 0.0);
}

TEST_CASE("degenerate bump placement errors out") {
  TensorGrid grid = unit_grid(11);
  // box that misses every interior node is rejected up front; the interior
  // critical-point guard itself is unreachable for the 1D tilted parabola
  // (its derivative has exactly one root in the interval)
  CHECK_THROWS_AS(construct_psi(grid, box1(0.401, 0.409)), Error);
}

TEST_CASE("paper-mode calibration reproduces the closed-form constants") {
  TensorGrid grid = unit_grid(11);
  PsiFunction psi = construct_psi(grid, box1(0.4, 0.6));
  CarlemanWeight w = calibrate_weight(psi, 2.0, WeightMode::paper);
  CHECK(w.lambda == doctest::Approx(30000.0).epsilon(1e-12));
  CHECK(w.C1 == doctest::Approx(0.5 * 1.0 * 0.04 * 30000.0 * 30000.0).epsilon(1e-12));
  CHECK(w.C3 == doctest::Approx(0.5 * 1.0 * 0.0016 * std::pow(30000.0, 4)).epsilon(1e-12));
  WeightVerification v = verify_weight_inequalities(w);
  CHECK(v.all_ok());
  CHECK_THROWS_AS(calibrate_weight(psi, 1.0, WeightMode::paper), Error);
  CHECK_THROWS_AS(calibrate_weight(psi, 3.0, WeightMode::paper), Error);
}

TEST_CASE("search-mode lambda is below the paper lambda with positive constants") {
  TensorGrid grid = unit_grid(41);
  PsiFunction psi = construct_psi(grid, box1(0.4, 0.6));
  CarlemanWeight ws = calibrate_weight(psi, 2.0, WeightMode::search);
  CarlemanWeight wp = calibrate_weight(psi, 2.0, WeightMode::paper);
  CHECK(ws.lambda <= wp.lambda);
  CHECK(ws.C1 > 0.0);
  CHECK(ws.C3 > 0.0);
  WeightVerification v = verify_weight_inequalities(ws, true);
  CHECK(v.boundary_ok);
  CHECK(v.min_log_ratio_ii >= 0.0);
  CHECK(v.min_log_ratio_iii >= 0.0);
  // boundary derivative at x = 0 is outward-positive
  CHECK(v.min_boundary.sign > 0);
}

TEST_CASE("weight positivity and the a -> 1 degradation of C1") {
  TensorGrid grid = unit_grid(21);
  PsiFunction psi = construct_psi(grid, box1(0.4, 0.6));
  CarlemanWeight w = calibrate_weight(psi, 2.0, WeightMode::search);
  // beta >= e^(2 lam ||psi||) - e^(lam ||psi||) > 0 at every node (log space)
  const double lower = 2.0 * w.lambda * psi.psi_max +
                       std::log1p(-std::exp(-w.lambda * psi.psi_max));
  for (int i = 0; i < grid.nx(); ++i) CHECK(w.log_beta[i] >= lower - 1e-12);
  // at fixed lambda, C1(a) = (a-1) m*^2 lam^2 / 2 tends to zero as a -> 1+
  const double lam = w.lambda;
  double prev = kInf;
  for (double a : {2.0, 1.5, 1.1, 1.01}) {
    const double c1 = 0.5 * (a - 1.0) * psi.m_star * psi.m_star * lam * lam;
    CHECK(c1 < prev);
    prev = c1;
  }
  CHECK(prev <= 0.0101 * 0.5 * psi.m_star * psi.m_star * lam * lam);
}

TEST_CASE("M formula branches") {
  CHECK(carleman_M(1.0, 16.0, 0.5, 1.0) == doctest::Approx(4.0));
  CHECK(carleman_M(1.0, 1000.0, 0.4, 1.0) == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(carleman_M(2.0, 0.0, 0.7, 1.5) == doctest::Approx(1.5 * 6.0));
  CHECK(carleman_M(2.0, 0.0, 0.3, 1.5) == doctest::Approx(1.5 * 6.0));
  CHECK(epsilon_branch(0.75) == 1);
  CHECK(epsilon_branch(0.25) == 0);
}

namespace {

struct RatioSetup {
  TensorGrid grid = build_tensor_grid({build_interval_grid(-1.0, 1.0, 81)},
                                      build_interval_grid(0.0, 1.0, 5)); 
  CoefficientB b = constant_b(grid, 1.0);
  Box tilde = [] { Box b; b.intervals = {{0.55, 0.75}}; return b; }();
  Box omega = [] { Box b; b.intervals = {{0.5, 0.8}}; return b; }();
  PsiFunction psi = construct_psi(grid, tilde);
  CarlemanWeight w = calibrate_weight(psi, 2.0, WeightMode::search);
  IndexSet omega1 = subdomain_indices_x(grid, omega);
};

CarlemanRatioReport one_ratio(RatioSetup& s, double gamma, double mu, double C1_cal,
                              double C2_cal, std::uint64_t seed) {
  ModeOperator op = assemble_mode_operator(s.grid, mu, gamma, s.b);
  Rng rng(seed);
  Vec u0 = rng.normal_vector(op.size());
  Vec g0 = rng.normal_vector(op.size());
  auto g = [&](double) { return g0; };
  const double T = 1.0;
  const int steps = 200;
  Trajectory traj = solve_mode(op, u0, g, T, T / steps, Scheme::crank_nicolson);
  Mat Pu(op.size(), steps + 1);
  for (int k = 0; k <= steps; ++k) Pu.col(k) = g0;
  CarlemanParams p = make_carleman_params(0.0, T, mu, gamma, C2_cal);
  return carleman_ratio(op, traj, Pu, s.w, p, s.omega1, C1_cal);
}

}  // namespace

TEST_CASE("carleman ratio: null case, scale invariance, edge suppression") {
  RatioSetup s;
  ModeOperator op = assemble_mode_operator(s.grid, 20.0, 0.5, s.b);
  const double T = 1.0;
  const int steps = 100;
  Trajectory zero = solve_mode(op, Vec::Zero(op.size()), nullptr, T, T / steps,
                               Scheme::crank_nicolson);
  Mat Pz = Mat::Zero(op.size(), steps + 1);
  CarlemanParams p = make_carleman_params(0.0, T, 20.0, 0.5, 1.0);
  CarlemanRatioReport null_rep = carleman_ratio(op, zero, Pz, s.w, p, s.omega1, 1.0);
  CHECK(null_rep.null_case);

  CarlemanRatioReport r1 = one_ratio(s, 0.5, 50.0, 1.0, 1.0, 7);
  CHECK(r1.edge_log_weight < std::log(1e-30));
  // scaling u -> s u scales both quadratic forms by s^2
  ModeOperator op2 = assemble_mode_operator(s.grid, 50.0, 0.5, s.b);
  Rng rng(7);
  Vec u0 = rng.normal_vector(op2.size());
  Vec g0 = rng.normal_vector(op2.size());
  for (double sc : {4.0, 3.7}) {
    auto g = [&](double) { return g0; };
    auto gs = [&](double) { return Vec(sc * g0); };
    Trajectory t1 = solve_mode(op2, u0, g, 1.0, 0.01, Scheme::crank_nicolson);
    Trajectory t2 = solve_mode(op2, sc * u0, gs, 1.0, 0.01, Scheme::crank_nicolson);
    Mat P1(op2.size(), 101), P2(op2.size(), 101);
    for (int k = 0; k <= 100; ++k) {
      P1.col(k) = g0;
      P2.col(k) = sc * g0;
    }
    CarlemanParams pp = make_carleman_params(0.0, 1.0, 50.0, 0.5, 1.0);
    CarlemanRatioReport a = carleman_ratio(op2, t1, P1, s.w, pp, s.omega1, 1.0);
    CarlemanRatioReport bb = carleman_ratio(op2, t2, P2, s.w, pp, s.omega1, 1.0);
    CHECK(a.ratio == doctest::Approx(bb.ratio).epsilon(1e-12));
  }
}

TEST_CASE("ratio stays below one at the calibrated constants, M-doubling included") {
  RatioSetup s;
  for (double gamma : {0.75, 0.25}) {
    const double C1_cal = gamma >= 0.5 ? 3.4742e-3 : 6.6771e-3;
    double worst = 0.0, worst2 = 0.0;
    for (int t = 0; t < 10; ++t) {
      const double mu = 10.0 * std::pow(10.0, 2.0 * t / 9.0);
      CarlemanRatioReport r = one_ratio(s, gamma, mu, C1_cal, 1.0, 100 + t);
      CarlemanRatioReport r2 = one_ratio(s, gamma, mu, C1_cal, 2.0, 100 + t);
      worst = std::max(worst, r.ratio);
      worst2 = std::max(worst2, r2.ratio);
      // measured behavior: the ratio grows toward ~C1_cal as M grows (the
      // weight concentrates at the psi vertex inside omega1), so the
      // regression assertion is that the estimate survives M-doubling
      CHECK(r2.ratio <= 1.0);
    }
    CHECK(worst <= 1.0);
    CHECK(worst2 <= 1.0);
  }
}

TEST_CASE("P123 split: epsilon branches and discrete identity residual") {
  // benign parameters keep every factor in linear range
  Box tilde = box1(0.4, 0.6);

  auto residual_at = [&](int nx, int steps) {
    TensorGrid g2 = build_tensor_grid({build_interval_grid(0.0, 1.0, nx)},
                                      build_interval_grid(0.0, 1.0, 5)); 
    PsiFunction p2 = construct_psi(g2, tilde);
    CarlemanWeight w2 = weight_with_lambda(p2, 2.0, 1.0);
    ModeOperator op = assemble_mode_operator(g2, 4.0, 0.75, constant_b(g2, 1.0));
    const double T = 1.0;
    // build z from a smooth u: z = u e^(-M alpha) vanishes to all orders at
    // the window ends, as the conjugation requires
    CarlemanParams p = make_carleman_params(0.0, T, 4.0, 0.75, 0.05);
    Mat z = Mat::Zero(op.size(), steps + 1);
    for (int k = 1; k < steps; ++k) {
      const double t = T * k / steps;
      const double s = t * (T - t);
      for (int i = 0; i < op.size(); ++i) {
        const int ix = op.map.nodes[i];
        const double x = g2.grids_x[0].nodes[ix];
        const double u = std::sin(M_PI * x) * (1.0 + 0.5 * t);
        const double beta = std::exp(2.0 * w2.lambda * p2.psi_max) -
                            std::exp(w2.lambda * p2.psi[ix]);
        z(i, k) = u * std::exp(-p.M * beta / s);
      }
    }
    P123Decomposition dec = decompose_P123(op, z, T / steps, w2, p);
    return dec;
  };
  P123Decomposition coarse = residual_at(41, 60);
  P123Decomposition fine = residual_at(81, 120);
  CHECK(coarse.epsilon == 1);
  CHECK(coarse.residual / fine.residual >= 3.0);  // O(h^2 + dt^2)

  // epsilon = 0 branch and the mu = 0 structure of P3
  TensorGrid g3 = unit_grid(21);
  PsiFunction p3 = construct_psi(g3, box1(0.4, 0.6));
  CarlemanWeight w3 = weight_with_lambda(p3, 2.0, 1.0);
  ModeOperator op0 = assemble_mode_operator(g3, 0.0, 0.25, constant_b(g3, 1.0));
  CarlemanParams prm = make_carleman_params(0.0, 1.0, 0.0, 0.25, 0.05);
  CHECK(prm.epsilon == 0);
  const int steps = 20;
  Mat z = Mat::Ones(op0.size(), steps + 1);
  z.col(0).setZero();
  z.col(steps).setZero();
  P123Decomposition dec = decompose_P123(op0, z, 1.0 / steps, w3, prm);
  // with mu = 0 both epsilon branches give P3 = (a-1) M (lap alpha) z
  CarlemanParams prm1 = prm;
  prm1.epsilon = 1;
  P123Decomposition dec1 = decompose_P123(op0, z, 1.0 / steps, w3, prm1);
  CHECK((dec.P3 - dec1.P3).cwiseAbs().maxCoeff() == 0.0);
}
