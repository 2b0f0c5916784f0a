#include <doctest.h>

#include "core/operators.hpp"
#include "core/spectral.hpp"

using namespace grushin;

namespace {

TensorGrid grid_1d(double a, double b, int n) {
  return build_tensor_grid({build_interval_grid(a, b, n)}, build_interval_grid(0.0, 1.0, 5));
}

// Oracle: smallest eigenvalue of a symmetric tridiagonal matrix by Sturm
// sequence bisection. Independent of the inverse-power path it checks.
double tridiag_smallest_eigenvalue(const Vec& diag, const Vec& off) {
  const int n = static_cast<int>(diag.size());
  auto count_below = [&](double x) {
    int count = 0;
    double d = diag[0] - x;
    if (d < 0) ++count;
    for (int i = 1; i < n; ++i) {
      d = diag[i] - x - off[i - 1] * off[i - 1] / d;
      if (d < 0) ++count;
    }
    return count;
  };
  double lo = 0.0, hi = diag.maxCoeff() + 2.0 * off.cwiseAbs().maxCoeff();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (count_below(mid) >= 1) hi = mid;
    else lo = mid;
  }
  return 0.5 * (lo + hi);
}

double oracle_smallest(const ModeOperator& op) {
  const int n = op.size();
  Vec diag(n), off(n - 1);
  for (int i = 0; i < n; ++i) diag[i] = op.A.coeff(i, i);
  for (int i = 0; i + 1 < n; ++i) off[i] = op.A.coeff(i, i + 1);
  return tridiag_smallest_eigenvalue(diag, off);
}

}  // namespace

TEST_CASE("pure Laplacian ground state") {
  TensorGrid grid = grid_1d(0.0, 1.0, 401);
  CoefficientB b = constant_b(grid, 1.0);
  ModeOperator op = assemble_mode_operator(grid, 0.0, 0.5, b);
  EigenResult er = smallest_eigenvalue(op);
  CHECK(std::abs(er.lambda - M_PI * M_PI) / (M_PI * M_PI) <= 1e-3);
  CHECK(er.residual <= 1e-5);
  // lambda is the Rayleigh quotient of the returned vector
  const double rq = er.vector.dot(op.A * er.vector) / er.vector.squaredNorm();
  CHECK(er.lambda == doctest::Approx(rq).epsilon(1e-12));
}

TEST_CASE("potential vanishes at the degeneracy node") {
  TensorGrid grid = grid_1d(-1.0, 1.0, 21);  // x = 0 is a node
  CoefficientB b = constant_b(grid, 2.0);
  for (double gamma : {0.25, 0.5, 1.0}) {
    ModeOperator op = assemble_mode_operator(grid, 1e6, gamma, b);
    const int mid = op.map.row_of[10];
    CHECK(op.potential[mid] == 0.0);
  }
  CHECK_THROWS_AS(assemble_mode_operator(grid, 1.0, 1.5, b), Error);
  CHECK_THROWS_AS(assemble_mode_operator(grid, 1.0, 0.0, b), Error);
}

TEST_CASE("assembly is exactly symmetric") {
  TensorGrid grid = grid_1d(-1.0, 1.0, 101);
  CoefficientB b = constant_b(grid, 1.0);
  ModeOperator op = assemble_mode_operator(grid, 123.0, 0.5, b);
  SpMat diff = SpMat(op.A - SpMat(op.A.transpose()));
  CHECK(Mat(diff).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("harmonic oscillator limit against the Sturm oracle") {
  TensorGrid grid = grid_1d(-1.0, 1.0, 2001);
  CoefficientB b = constant_b(grid, 1.0);
  ModeOperator op = assemble_mode_operator(grid, 1e6, 1.0, b);
  EigenResult er = smallest_eigenvalue(op);
  const double oracle = oracle_smallest(op);
  CHECK(er.lambda == doctest::Approx(oracle).epsilon(1e-8));
  CHECK(er.lambda / std::sqrt(1e6) >= 0.9);
  CHECK(er.lambda / std::sqrt(1e6) <= 1.1);
}

TEST_CASE("smallest eigenvalue is nondecreasing in mu") {
  TensorGrid grid = grid_1d(-1.0, 1.0, 201);
  CoefficientB b = constant_b(grid, 1.0);
  double prev = 0.0;
  for (double mu : {0.0, 10.0, 1000.0, 1e5}) {
    ModeOperator op = assemble_mode_operator(grid, mu, 0.5, b);
    EigenResult er = smallest_eigenvalue(op);
    CHECK(er.lambda >= prev);
    prev = er.lambda;
  }
}

TEST_CASE("second-order convergence of the ground eigenvalue") {
  CoefficientB b0 = constant_b(grid_1d(0.0, 1.0, 101), 1.0);
  double lam[3];
  int idx = 0;
  for (int n : {101, 201, 401}) {
    TensorGrid grid = grid_1d(0.0, 1.0, n);
    CoefficientB b = constant_b(grid, 1.0);
    ModeOperator op = assemble_mode_operator(grid, 0.0, 0.5, b);
    lam[idx++] = smallest_eigenvalue(op).lambda;
  }
  const double exact = M_PI * M_PI;
  const double ratio = (lam[0] - exact) / (lam[1] - exact);
  CHECK(ratio == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("scaling-law fit recovers the dissipation exponent") {
  TensorGrid grid = grid_1d(-1.0, 1.0, 1001);
  CoefficientB b = constant_b(grid, 1.0);
  for (double gamma : {0.5, 1.0}) {
    std::vector<std::pair<double, double>> pairs;
    const Vec* warm = nullptr;
    Vec prev;
    for (int i = 0; i < 7; ++i) {
      const double mu = 100.0 * std::pow(1e4, i / 6.0);
      ModeOperator op = assemble_mode_operator(grid, mu, gamma, b);
      EigenResult er = smallest_eigenvalue(op, 1e-10, 600, warm);
      pairs.push_back({mu, er.lambda});
      prev = er.vector;
      warm = &prev;
    }
    ScalingFit fit = fit_scaling_law(pairs, gamma);
    CHECK(std::abs(fit.exponent - 1.0 / (1.0 + gamma)) <= 0.05);
    CHECK(fit.c_star <= fit.c_star_upper);
    for (const auto& [mu, lam] : pairs) {
      const double r = lam * std::pow(mu, -1.0 / (1.0 + gamma));
      CHECK(r >= fit.c_star * (1.0 - 1e-12));
      CHECK(r <= fit.c_star_upper * (1.0 + 1e-12));
    }
  }
  CHECK_THROWS_AS(fit_scaling_law({{1, 1}, {2, 2}, {4, 3}, {8, 4}, {16, 5}}, 0.5), Error);
}

TEST_CASE("full operator matches the mode operator on tensor data") {
  TensorGrid grid = build_tensor_grid({build_interval_grid(-1.0, 1.0, 31)},
                                      build_interval_grid(0.0, 1.0, 25));
  CoefficientB b = constant_b(grid, 1.3);
  const double gamma = 0.5;
  FullOperator full = assemble_full_operator(grid, gamma, b);
  // discrete y-eigenpairs make the tensor identity exact
  ModeBasis fd = dirichlet_eigenpairs_fd(grid.grid_y, 3);
  Rng rng(5);
  for (int n = 0; n < 3; ++n) {
    ModeOperator mode = assemble_mode_operator(grid, fd.mu[n], gamma, b);
    Vec vx = rng.normal_vector(mode.size());
    // u = v(x) phi_n(y)
    Vec u = Vec::Zero(grid.total());
    for (int k = 0; k < mode.size(); ++k)
      for (int iy = 0; iy < grid.ny(); ++iy)
        u[grid.flat(mode.map.nodes[k], iy)] = vx[k] * fd.phi(iy, n);
    Vec Gu_int = full.A * full.restrict_full(u);
    Vec Gv = mode.A * vx;
    // compare G u against (G_n v) phi_n
    double worst = 0.0;
    for (int kx = 0; kx < mode.size(); ++kx)
      for (int ky = 0; ky < full.niy; ++ky) {
        const double expect = Gv[kx] * fd.phi(ky + 1, n);
        worst = std::max(worst, std::abs(Gu_int[full.row(kx, ky)] - expect));
      }
    CHECK(worst <= 1e-10 * Gv.cwiseAbs().maxCoeff());
  }
  // symmetry and positivity
  SpMat diff = SpMat(full.A - SpMat(full.A.transpose()));
  CHECK(Mat(diff).cwiseAbs().maxCoeff() == 0.0);
  for (int t = 0; t < 5; ++t) {
    Vec v = rng.normal_vector(full.size());
    CHECK(v.dot(full.A * v) > 0.0);
  }
}
