#include <doctest.h>

#include "core/spectral.hpp"

using namespace grushin;

TEST_CASE("classical sine spectrum") {
  Grid1D gpi = build_interval_grid(0.0, M_PI, 101);
  ModeBasis b = dirichlet_eigenpairs(gpi, 4);
  CHECK(b.mu[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(b.mu[1] == doctest::Approx(4.0).epsilon(1e-14));

  Grid1D g1 = build_interval_grid(0.0, 1.0, 101);
  ModeBasis b1 = dirichlet_eigenpairs(g1, 4);
  CHECK(b1.mu[1] == doctest::Approx(4.0 * M_PI * M_PI).epsilon(1e-14));
  CHECK(b1.orthonormality_defect <= 1e-8);
  for (int n = 0; n < b1.count; ++n) {
    CHECK(b1.phi(0, n) == 0.0);
    CHECK(b1.phi(100, n) == 0.0);
  }
  CHECK_THROWS_AS(dirichlet_eigenpairs(g1, 60), Error);
}

TEST_CASE("FD eigensolve agrees with the analytic spectrum") {
  Grid1D g = build_interval_grid(0.0, 1.0, 201);
  ModeBasis fd = dirichlet_eigenpairs_fd(g, 3);
  CHECK(std::abs(fd.mu[0] - M_PI * M_PI) / (M_PI * M_PI) <= 1e-3);
  CHECK(fd.orthonormality_defect <= 1e-8);
}

TEST_CASE("dyadic block membership") {
  Grid1D g = build_interval_grid(0.0, 1.0, 101);
  ModeBasis b = dirichlet_eigenpairs(g, 12);
  BlockIndex j2 = block_members(b, 2);  // cutoff 16
  CHECK(j2.members == std::vector<int>{0});
  BlockIndex j3 = block_members(b, 3);  // cutoff 64
  CHECK(j3.members == std::vector<int>{0, 1});
  BlockIndex big = block_members(b, 7);  // cutoff 16384 >= mu_12
  CHECK(static_cast<int>(big.members.size()) == b.count);
  // nested blocks
  for (int j = 1; j < 7; ++j) {
    BlockIndex a = block_members(b, j);
    BlockIndex c = block_members(b, j + 1);
    CHECK(std::includes(c.members.begin(), c.members.end(), a.members.begin(),
                        a.members.end()));
  }
}

TEST_CASE("block projection is the orthogonal projection onto E_j") {
  TensorGrid grid = build_tensor_grid({build_interval_grid(-1.0, 1.0, 21)},
                                      build_interval_grid(0.0, 1.0, 41)); 
  ModeBasis b = dirichlet_eigenpairs(grid.grid_y, 8);
  Rng rng(11);
  // u = phi_1 profile times an x profile: unchanged under Pi_j when 1 in E_j
  Vec field = Vec::Zero(grid.total());
  for (int ix = 0; ix < grid.nx(); ++ix) {
    const double vx = std::cos(1.7 * grid.x_coords(ix)[0]);
    for (int iy = 0; iy < grid.ny(); ++iy)
      field[grid.flat(ix, iy)] = vx * b.phi(iy, 0);
  }
  Vec proj = project_block(grid, b, 2, field);
  CHECK((proj - field).cwiseAbs().maxCoeff() <= 1e-12 * field.cwiseAbs().maxCoeff());

  // idempotence and Pythagoras on a resolved random field
  Vec u = Vec::Zero(grid.total());
  ModeField coeffs;
  coeffs.coeff = Mat::Zero(grid.nx(), b.count);
  for (int ix = 1; ix + 1 < grid.nx(); ++ix)
    for (int n = 0; n < b.count; ++n) coeffs.coeff(ix, n) = rng.normal();
  u = synthesize_field(grid, b, coeffs);
  Vec pu = project_block(grid, b, 3, u);
  Vec ppu = project_block(grid, b, 3, pu);
  CHECK((ppu - pu).cwiseAbs().maxCoeff() <= 1e-12 * pu.cwiseAbs().maxCoeff());

  auto norm_sq = [&](const Vec& v) {
    double acc = 0.0;
    for (int ix = 0; ix < grid.nx(); ++ix)
      for (int iy = 0; iy < grid.ny(); ++iy)
        acc += grid.quad_weight(ix, iy) * v[grid.flat(ix, iy)] * v[grid.flat(ix, iy)];
    return acc;
  };
  const double total = norm_sq(u);
  CHECK(norm_sq(pu) + norm_sq(u - pu) == doctest::Approx(total).epsilon(1e-10));

  // Bessel-Parseval: ||u||^2 = sum_n ||u_n||^2 for resolved fields
  ModeField mf = analyze_field(grid, b, u);
  double parseval = 0.0;
  for (int ix = 0; ix < grid.nx(); ++ix)
    for (int n = 0; n < b.count; ++n)
      parseval += grid.x_quad_weight(ix) * mf.coeff(ix, n) * mf.coeff(ix, n);
  CHECK(parseval == doctest::Approx(total).epsilon(1e-8));
}

TEST_CASE("empirical spectral-inequality constant") {
  Grid1D g = build_interval_grid(0.0, 1.0, 201);
  ModeBasis b = dirichlet_eigenpairs(g, 10);
  IndexSet full = subdomain_indices_1d(g, 0.0, 1.0);
  SpectralIneqReport rep = spectral_inequality_constant(b, full, 50.0);
  CHECK(rep.c_emp == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(rep.modes_below_mu == 2);  // pi^2, 4 pi^2 <= 50 < 9 pi^2

  IndexSet omega2 = subdomain_indices_1d(g, 0.3, 0.5);
  SpectralIneqReport r1 = spectral_inequality_constant(b, omega2, 50.0);
  SpectralIneqReport r2 = spectral_inequality_constant(b, omega2, 500.0);
  CHECK(r2.c_emp >= r1.c_emp);  // sup over a larger set

  // 2x2 oracle via the quadratic formula on the same restricted mass form
  Mat M = restricted_mass(b, omega2, 2);
  const double tr = M(0, 0) + M(1, 1);
  const double det = M(0, 0) * M(1, 1) - M(0, 1) * M(1, 0);
  const double lmin = tr / 2.0 - std::sqrt(tr * tr / 4.0 - det);
  CHECK(r1.c_emp == doctest::Approx(1.0 / lmin).epsilon(1e-10));
}

TEST_CASE("log growth of the spectral constant stays sub square-root") {
  Grid1D g = build_interval_grid(0.0, 1.0, 401);
  ModeBasis b = dirichlet_eigenpairs(g, 24);
  IndexSet omega2 = subdomain_indices_1d(g, 0.55, 0.85);
  // beyond the representable range the restricted form goes singular; the
  // contract is a condition-report error
  CHECK_THROWS_AS(spectral_inequality_constant(b, omega2, 5000.0), Error);
  std::vector<double> sq, lg;
  for (double mu : {50.0, 200.0, 800.0}) {
    SpectralIneqReport r = spectral_inequality_constant(b, omega2, mu);
    sq.push_back(std::sqrt(mu));
    lg.push_back(std::log(r.c_emp));
  }
  // fitted C in log C = c + C sqrt(mu): finite, and residual small
  const double n = sq.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < sq.size(); ++i) {
    sx += sq[i]; sy += lg[i]; sxx += sq[i] * sq[i]; sxy += sq[i] * lg[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double icept = (sy - slope * sx) / n;
  CHECK(std::isfinite(slope));
  CHECK(slope > 0.0);
  double resid = 0.0;
  for (std::size_t i = 0; i < sq.size(); ++i) {
    const double e = lg[i] - (icept + slope * sq[i]);
    resid += e * e;
  }
  CHECK(std::sqrt(resid / n) <= 0.35 * std::abs(sy / n));  // configured residual bound
}
