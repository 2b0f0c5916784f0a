#include "core/domain.hpp"

#include <algorithm>

namespace grushin {

Grid1D build_interval_grid(double a, double b, int n) {
  require(a < b, Errc::invalid_argument, "grid endpoints must satisfy a < b");
  require(n >= 3, Errc::invalid_argument, "grid needs at least 3 nodes");
  Grid1D g;
  g.a = a;
  g.b = b;
  g.n = n;
  g.h = (b - a) / (n - 1);
  g.nodes.resize(n);
  for (int i = 0; i < n; ++i) g.nodes[i] = a + g.h * i;
  g.nodes[n - 1] = b;  // exact right endpoint
  g.boundary.assign(n, false);
  g.boundary[0] = g.boundary[n - 1] = true;
  return g;
}

std::vector<double> TensorGrid::x_coords(int ix) const {
  std::vector<double> c(grids_x.size());
  if (grids_x.size() == 1) {
    c[0] = grids_x[0].nodes[ix];
  } else {
    const int n1 = grids_x[1].n;
    c[0] = grids_x[0].nodes[ix / n1];
    c[1] = grids_x[1].nodes[ix % n1];
  }
  return c;
}

bool TensorGrid::x_is_boundary(int ix) const {
  if (grids_x.size() == 1) return grids_x[0].boundary[ix];
  const int n1 = grids_x[1].n;
  return grids_x[0].boundary[ix / n1] || grids_x[1].boundary[ix % n1];
}

double TensorGrid::x_quad_weight(int ix) const {
  if (grids_x.size() == 1) return grids_x[0].quad_weight(ix);
  const int n1 = grids_x[1].n;
  return grids_x[0].quad_weight(ix / n1) * grids_x[1].quad_weight(ix % n1);
}

double TensorGrid::quad_weight(int ix, int iy) const {
  return x_quad_weight(ix) * grid_y.quad_weight(iy);
}

double TensorGrid::measure() const {
  double m = grid_y.length();
  for (const auto& g : grids_x) m *= g.length();
  return m;
}

TensorGrid build_tensor_grid(const std::vector<Grid1D>& grids_x, const Grid1D& grid_y) {
  require(grids_x.size() == 1 || grids_x.size() == 2, Errc::invalid_argument,
          "x factor must be 1D or 2D");
  TensorGrid g;
  g.grids_x = grids_x;
  g.grid_y = grid_y;
  return g;
}

IndexSet subdomain_indices_1d(const Grid1D& grid, double lo, double hi) {
  require(lo < hi, Errc::invalid_argument, "box interval must satisfy lo < hi");
  IndexSet s;
  s.box.intervals = {{lo, hi}};
  for (int i = 1; i + 1 < grid.n; ++i) {
    const double x = grid.nodes[i];
    if (x > lo && x < hi) s.indices.push_back(i);
  }
  require(!s.indices.empty(), Errc::invalid_argument,
          "box does not intersect the grid interior (degenerate observation region)");
  return s;
}

IndexSet subdomain_indices_x(const TensorGrid& grid, const Box& box) {
  require(static_cast<int>(box.intervals.size()) == grid.dim_x(), Errc::invalid_argument,
          "box must have one interval per x axis");
  IndexSet s;
  s.box = box;
  const int nx = grid.nx();
  for (int ix = 0; ix < nx; ++ix) {
    if (grid.x_is_boundary(ix)) continue;
    const auto c = grid.x_coords(ix);
    bool inside = true;
    for (std::size_t d = 0; d < c.size(); ++d) {
      const auto& [lo, hi] = box.intervals[d];
      if (!(c[d] > lo && c[d] < hi)) inside = false;
    }
    if (inside) s.indices.push_back(ix);
  }
  require(!s.indices.empty(), Errc::invalid_argument,
          "box does not intersect the grid interior (degenerate observation region)");
  return s;
}

IndexSet subdomain_indices(const TensorGrid& grid, const Box& box) {
  require(static_cast<int>(box.intervals.size()) == grid.dim_x() + 1, Errc::invalid_argument,
          "box must have one interval per axis (x axes then y)");
  Box bx;
  bx.intervals.assign(box.intervals.begin(), box.intervals.end() - 1);
  IndexSet xs = subdomain_indices_x(grid, bx);
  const auto& [ylo, yhi] = box.intervals.back();
  IndexSet s;
  s.box = box;
  for (int ix : xs.indices) {
    for (int iy = 1; iy + 1 < grid.ny(); ++iy) {
      const double y = grid.grid_y.nodes[iy];
      if (y > ylo && y < yhi) s.indices.push_back(grid.flat(ix, iy));
    }
  }
  require(!s.indices.empty(), Errc::invalid_argument,
          "box does not intersect the grid interior (degenerate observation region)");
  std::sort(s.indices.begin(), s.indices.end());
  return s;
}

double quad_sum_1d(const Grid1D& grid, const IndexSet& set, const Vec& values) {
  double acc = 0.0;
  for (int i : set.indices) acc += grid.quad_weight(i) * values[i];
  return acc;
}

}  // namespace grushin
