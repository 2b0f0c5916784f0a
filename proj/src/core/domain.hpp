#pragma once

#include "core/common.hpp"

namespace grushin {

/// Uniform 1D grid on [a, b] with the two endpoints flagged as boundary.
struct Grid1D {
  double a = 0.0;
  double b = 1.0;
  int n = 0;              // node count, >= 3
  double h = 0.0;         // (b - a) / (n - 1)
  Vec nodes;              // strictly increasing
  std::vector<bool> boundary;  // true exactly at the two endpoints

  int interior_count() const { return n - 2; }
  double length() const { return b - a; }
  /// Trapezoid weight of node i (h/2 at endpoints, h inside).
  double quad_weight(int i) const { return (i == 0 || i == n - 1) ? 0.5 * h : h; }
};

Grid1D build_interval_grid(double a, double b, int n);

/// Axis-aligned box, one closed-open interval per axis. Used to carve the
/// observation/control regions out of a grid.
struct Box {
  std::vector<std::pair<double, double>> intervals;  // one per axis
};

/// Tensor grid Omega = Omega1 x Omega2. The x factor is 1D or 2D (dim_x in
/// {1,2}); the y factor is always 1D. Flattened x-major: for dim_x == 1,
/// node(ix, iy) = ix * ny + iy; for dim_x == 2 the x index itself is
/// ix = i0 * nx1 + i1.
struct TensorGrid {
  std::vector<Grid1D> grids_x;  // 1 or 2 axes
  Grid1D grid_y;

  int dim_x() const { return static_cast<int>(grids_x.size()); }
  int nx() const {
    int m = 1;
    for (const auto& g : grids_x) m *= g.n;
    return m;
  }
  int ny() const { return grid_y.n; }
  int total() const { return nx() * ny(); }
  int flat(int ix, int iy) const { return ix * ny() + iy; }

  /// Coordinates of flattened x node ix (size dim_x).
  std::vector<double> x_coords(int ix) const;
  bool x_is_boundary(int ix) const;
  /// Trapezoid weight of the x node (product across axes).
  double x_quad_weight(int ix) const;
  /// Full quadrature weight of node (ix, iy).
  double quad_weight(int ix, int iy) const;
  double measure() const;
};

TensorGrid build_tensor_grid(const std::vector<Grid1D>& grids_x, const Grid1D& grid_y);

/// Sorted interior-node indices cut out of a grid by a box, together with the
/// box that produced them.
struct IndexSet {
  std::vector<int> indices;  // unique, sorted
  Box box;

  bool contains(int idx) const {
    return std::binary_search(indices.begin(), indices.end(), idx);
  }
  int size() const { return static_cast<int>(indices.size()); }
};

/// Interior nodes of a 1D grid strictly inside (lo, hi). Errors when empty.
IndexSet subdomain_indices_1d(const Grid1D& grid, double lo, double hi);

/// Interior x-nodes (flattened) of the tensor grid strictly inside the box's
/// x intervals. The box must have dim_x intervals.
IndexSet subdomain_indices_x(const TensorGrid& grid, const Box& box);

/// Interior nodes of the tensor grid strictly inside the full box
/// (dim_x + 1 intervals). Indices are flattened (ix * ny + iy).
IndexSet subdomain_indices(const TensorGrid& grid, const Box& box);

/// Quadrature of a sampled function restricted to an index set.
double quad_sum_1d(const Grid1D& grid, const IndexSet& set, const Vec& values);

}  // namespace grushin
