#include <doctest.h>

#include "core/domain.hpp"

using namespace grushin;

TEST_CASE("uniform interval grids") {
  Grid1D g = build_interval_grid(0.0, 1.0, 11);
  CHECK(g.h == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(g.nodes[0] == 0.0);
  CHECK(g.nodes[10] == 1.0);
  CHECK(g.nodes[4] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(g.boundary[0]);
  CHECK(g.boundary[10]);
  CHECK_FALSE(g.boundary[5]);

  Grid1D sym = build_interval_grid(-1.0, 1.0, 3);
  CHECK(sym.nodes[0] == -1.0);
  CHECK(sym.nodes[1] == 0.0);
  CHECK(sym.nodes[2] == 1.0);

  Grid1D pi_grid = build_interval_grid(0.0, M_PI, 101);
  CHECK(pi_grid.h == doctest::Approx(M_PI / 100.0).epsilon(1e-15));

  CHECK_THROWS_AS(build_interval_grid(1.0, 0.0, 5), Error);
  CHECK_THROWS_AS(build_interval_grid(0.0, 1.0, 2), Error);
}

TEST_CASE("subdomain index sets") {
  Grid1D g = build_interval_grid(0.0, 1.0, 11);
  IndexSet s = subdomain_indices_1d(g, 0.35, 0.65);
  CHECK(s.indices == std::vector<int>{4, 5, 6});

  IndexSet full = subdomain_indices_1d(g, 0.0, 1.0);
  CHECK(full.size() == g.interior_count());

  CHECK_THROWS_AS(subdomain_indices_1d(g, 2.0, 3.0), Error);
}

TEST_CASE("tensor grid quadrature sums to the measure") {
  TensorGrid grid = build_tensor_grid({build_interval_grid(-1.0, 1.0, 41)},
                                      build_interval_grid(0.0, 1.0, 31));
  double total = 0.0;
  for (int ix = 0; ix < grid.nx(); ++ix)
    for (int iy = 0; iy < grid.ny(); ++iy) total += grid.quad_weight(ix, iy);
  CHECK(total == doctest::Approx(grid.measure()).epsilon(1e-12));

  // constant-1 quadrature over a subdomain approximates its measure to O(h)
  Box box;
  box.intervals = {{-0.5, 0.25}, {0.2, 0.7}};
  IndexSet sub = subdomain_indices(grid, box);
  double sub_meas = 0.0;
  for (int idx : sub.indices) sub_meas += grid.quad_weight(idx / grid.ny(), idx % grid.ny());
  const double exact = 0.75 * 0.5;
  CHECK(std::abs(sub_meas - exact) <= 3.0 * (grid.grids_x[0].h + grid.grid_y.h));
}

TEST_CASE("2D x factor indexing") {
  TensorGrid grid = build_tensor_grid({build_interval_grid(-1.0, 1.0, 5),
                                       build_interval_grid(-1.0, 1.0, 7)},
                                      build_interval_grid(0.0, 1.0, 5));
  CHECK(grid.nx() == 35);
  CHECK(grid.dim_x() == 2);
  const auto c = grid.x_coords(1 * 7 + 3);
  CHECK(c[0] == doctest::Approx(-0.5));
  CHECK(c[1] == doctest::Approx(0.0));
  CHECK(grid.x_is_boundary(0));
  CHECK_FALSE(grid.x_is_boundary(1 * 7 + 3));

  Box box;
  box.intervals = {{-0.6, 0.6}, {-0.4, 0.4}};
  IndexSet s = subdomain_indices_x(grid, box);
  for (int ix : s.indices) {
    const auto xc = grid.x_coords(ix);
    CHECK(std::abs(xc[0]) < 0.6);
    CHECK(std::abs(xc[1]) < 0.4);
  }
}

TEST_CASE("interior plus boundary covers all nodes") {
  Grid1D g = build_interval_grid(0.0, 2.0, 9);
  IndexSet full = subdomain_indices_1d(g, 0.0, 2.0);
  int covered = full.size();
  for (int i = 0; i < g.n; ++i)
    if (g.boundary[i]) ++covered;
  CHECK(covered == g.n);
}
