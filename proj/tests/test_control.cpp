#include <doctest.h>

#include "core/control.hpp"
#include "core/observability.hpp"

using namespace grushin;

namespace {

struct Setup {
  TensorGrid grid = build_tensor_grid({build_interval_grid(-1.0, 1.0, 41)},
                                      build_interval_grid(0.0, 1.0, 21));
  CoefficientB b = constant_b(grid, 1.0);
  ModeBasis basis = dirichlet_eigenpairs(grid.grid_y, 6);
  Box omega = [] {
    Box bx;
    bx.intervals = {{0.3, 0.8}, {0.2, 0.8}};
    return bx;
  }();
  Box omega_full = [] {
    Box bx;
    bx.intervals = {{-1.0, 1.0}, {0.0, 1.0}};
    return bx;
  }();
};

}  // namespace

TEST_CASE("zero state needs zero control") {
  Setup s;
  ControlStack stack(s.grid, s.basis, 0.5, s.b, s.omega, 1.0, 200, 6);
  LRSchedule schedule = build_schedule(1.0, 0.5, 0.75, 8);
  ControlRun run = lr_null_control(stack, Vec::Zero(stack.f_dim()), schedule, 3, 1e-4);
  CHECK(run.report.final_norm == 0.0);
  CHECK(run.report.cost == 0.0);
  CHECK(run.control.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single-mode full-support control matches the scalar oracle") {
  Setup s;
  // full omega, one mode: each generator eigendirection decouples, so the
  // penalized control reduces to scalar recursions per eigenvalue
  ControlStack stack(s.grid, s.basis, 0.5, s.b, s.omega_full, 0.5, 100, 1);
  ModeOperator op = assemble_mode_operator(s.grid, s.basis.mu[0], 0.5, s.b);
  EigenResult er = smallest_eigenvalue(op);
  Vec u0 = er.vector;
  const double eps = 1e-6;
  Vec u = u0;
  auto res = stack.block_control(u, {0}, 0, 100, eps);

  // scalar oracle on the ground eigendirection: BE decay q = 1/(1 + dt lam),
  // Gramian Lambda = sum_l dt q^(2(m-l+1)), q* = -u_free/(Lambda+eps)
  const double dt = stack.dt();
  const double q = 1.0 / (1.0 + dt * er.lambda);
  const int m = 100;
  double Lambda = 0.0;
  for (int l = 1; l <= m; ++l) Lambda += dt * std::pow(q, 2.0 * (m - l + 1));
  const double u_free = std::pow(q, m);  // coefficient of u0 at the end
  const double qstar = -u_free / (Lambda + eps);
  const double resid_oracle = std::abs(u_free + Lambda * qstar);
  // physical L2(omega) cost: the y factor phi_1^2 integrates to one, leaving
  // the x quadrature weight on the Euclidean coefficient
  const double cost_oracle = [&] {
    double acc = 0.0;
    for (int l = 1; l <= m; ++l) {
      const double c = qstar * std::pow(q, m - l + 1);
      acc += dt * c * c;
    }
    return stack.wx() * acc;
  }();
  CHECK(res.residual == doctest::Approx(resid_oracle).epsilon(1e-6));
  CHECK(res.cost == doctest::Approx(cost_oracle).epsilon(1e-6));
  CHECK(res.residual <= 1e-4);
}

TEST_CASE("cost never grows when the control region grows") {
  Setup s;
  Box small_omega;
  small_omega.intervals = {{0.4, 0.7}, {0.3, 0.7}};
  LRSchedule schedule = build_schedule(1.0, 0.5, 0.75, 8);
  Rng rng(13);
  ControlStack stack_small(s.grid, s.basis, 0.5, s.b, small_omega, 1.0, 300, 6);
  ControlStack stack_big(s.grid, s.basis, 0.5, s.b, s.omega, 1.0, 300, 6);
  Vec u0 = rng.normal_vector(stack_small.f_dim());
  ControlRun run_small = lr_null_control(stack_small, u0, schedule, 3, 1e-4);
  ControlRun run_big = lr_null_control(stack_big, u0, schedule, 3, 1e-4);
  CHECK(run_big.report.cost <= run_small.report.cost * (1.0 + 1e-6));
}

TEST_CASE("duality sanity against the measured block observability constant") {
  Setup s;
  const double T = 0.4;
  const int steps = 80;
  ControlStack stack(s.grid, s.basis, 0.5, s.b, s.omega, T, steps, 6);
  Rng rng(29);
  Vec u0 = rng.normal_vector(stack.f_dim());
  const std::vector<int> rows = stack.block_rows(2);  // E_2 = {mode 1}
  REQUIRE(!rows.empty());
  Vec u = u0;
  auto res = stack.block_control(u, rows, 0, steps, 1e-8);
  // gap actually closed by the control
  Vec u_free = u0;
  stack.decay(u_free, 0, steps);
  const double gap = stack.block_norm(u_free, rows);
  // duality: cost >= gap^2 / C_obs for the block observability constant over
  // the same window and region
  Box bx;
  bx.intervals = {s.omega.intervals[0]};
  IndexSet omega1 = subdomain_indices_x(s.grid, bx);
  IndexSet omega2 =
      subdomain_indices_1d(s.grid.grid_y, s.omega.intervals[1].first,
                           s.omega.intervals[1].second);
  Mat mass_full = restricted_mass(s.basis, omega2, s.basis.count);
  std::vector<ModeOperator> ops;
  for (int r : rows)
    ops.push_back(assemble_mode_operator(s.grid, s.basis.mu[r], 0.5, s.b));
  Mat mass(rows.size(), rows.size());
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t c = 0; c < rows.size(); ++c) mass(a, c) = mass_full(rows[a], rows[c]);
  ObsProblem prob(std::move(ops), omega1, mass, T, steps);
  const double C_obs = empirical_obs_constant(prob).C_obs;
  const double closed = gap - res.residual;
  CHECK(res.cost >= 0.5 * closed * closed / C_obs);
}

TEST_CASE("dyadic null control crushes the state with exact support") {
  Setup s;
  const double T = 1.0;
  const int steps = 500;
  const int n_modes = 6;
  ControlStack stack(s.grid, s.basis, 0.5, s.b, s.omega, T, steps, n_modes);
  LRSchedule schedule = build_schedule(T, 0.5, 0.75, 8);
  Rng rng(31);
  Vec u0 = rng.normal_vector(stack.f_dim());
  ControlRun run = lr_null_control(stack, u0, schedule, 4, 1e-5);
  CHECK(run.report.final_norm <= 1e-3 * run.report.u0_norm);
  CHECK(std::isfinite(run.report.cost));
  // support: passive nodes carry exactly zero control
  for (int k = 0; k <= steps; ++k)
    if (run.block_of_node[k] < 0) CHECK(run.control.row(k).cwiseAbs().maxCoeff() == 0.0);
  // block residuals nonincreasing along the schedule
  for (std::size_t i = 1; i < run.report.blocks.size(); ++i)
    if (run.report.blocks[i].n_modes > 0 && run.report.blocks[i - 1].n_modes > 0)
      CHECK(run.report.blocks[i].residual_after <=
            run.report.blocks[i - 1].residual_after * (1.0 + 0.5));

  // per-mode passive-phase contraction at the discrete backward-Euler rate
  std::vector<double> lam(n_modes);
  for (int n = 0; n < n_modes; ++n) {
    ModeOperator op = assemble_mode_operator(s.grid, s.basis.mu[n], 0.5, s.b);
    lam[n] = smallest_eigenvalue(op).lambda;
  }
  const int nix = stack.f_dim() / n_modes;
  for (const auto& br : run.report.blocks) {
    const int from = br.k_mid, to = br.k_end;
    if (to <= from) continue;
    for (int n = 0; n < n_modes; ++n) {
      const double before = run.states.col(from).segment(n * nix, nix).norm();
      const double after = run.states.col(to).segment(n * nix, nix).norm();
      if (before <= 1e-300) continue;
      const double bound = std::pow(1.0 + stack.dt() * lam[n], -(to - from));
      CHECK(after <= before * bound * (1.0 + 1e-10));
    }
  }

  // doubling the horizon never worsens the final norm
  ControlStack stack2(s.grid, s.basis, 0.5, s.b, s.omega, 2.0 * T, 2 * steps, n_modes);
  LRSchedule schedule2 = build_schedule(2.0 * T, 0.5, 0.75, 8);
  ControlRun run2 = lr_null_control(stack2, u0, schedule2, 4, 1e-5);
  CHECK(run2.report.final_norm <= run.report.final_norm * (1.0 + 1e-6));
}
