#include "core/operators.hpp"

#include <algorithm>
#include <numeric>

namespace grushin {

CoefficientB constant_b(const TensorGrid& grid, double value) {
  require(value > 0.0, Errc::invalid_argument, "coefficient b must be positive");
  CoefficientB b;
  b.samples = Vec::Constant(grid.nx(), value);
  b.b_min = b.b_max = value;
  return b;
}

CoefficientB sampled_b(const TensorGrid& grid, const Vec& samples) {
  require(samples.size() == grid.nx(), Errc::invalid_argument,
          "b samples must cover the x nodes");
  CoefficientB b;
  b.samples = samples;
  b.b_min = samples.minCoeff();
  b.b_max = samples.maxCoeff();
  require(b.b_min > 0.0, Errc::invalid_argument, "coefficient b must be positive");
  return b;
}

Vec InteriorMapX::restrict_full(const Vec& full) const {
  Vec v(size());
  for (int k = 0; k < size(); ++k) v[k] = full[nodes[k]];
  return v;
}

Vec InteriorMapX::extend_zero(const Vec& interior, int nx_full) const {
  Vec v = Vec::Zero(nx_full);
  for (int k = 0; k < size(); ++k) v[nodes[k]] = interior[k];
  return v;
}

InteriorMapX interior_map_x(const TensorGrid& grid) {
  InteriorMapX m;
  m.row_of.assign(grid.nx(), -1);
  for (int ix = 0; ix < grid.nx(); ++ix) {
    if (!grid.x_is_boundary(ix)) {
      m.row_of[ix] = static_cast<int>(m.nodes.size());
      m.nodes.push_back(ix);
    }
  }
  return m;
}

namespace {

double potential_at(const TensorGrid& grid, const CoefficientB& b, double mu, double gamma,
                    int ix) {
  const auto c = grid.x_coords(ix);
  double r2 = 0.0;
  for (double xi : c) r2 += xi * xi;
  // |x|^(2 gamma) via r2^gamma; exact zero at the degeneracy node.
  const double pot = (r2 == 0.0) ? 0.0 : std::pow(r2, gamma);
  return mu * pot * b.samples[ix];
}

}  // namespace

ModeOperator assemble_mode_operator(const TensorGrid& grid, double mu, double gamma,
                                    const CoefficientB& b) {
  require(gamma > 0.0 && gamma <= 1.0, Errc::invalid_argument,
          "gamma must lie in (0, 1]");
  require(mu >= 0.0, Errc::invalid_argument, "mu must be nonnegative");
  ModeOperator op;
  op.mu = mu;
  op.gamma = gamma;
  op.grid = &grid;
  op.map = interior_map_x(grid);
  const int n = op.map.size();
  op.potential.resize(n);
  std::vector<Triplet> trips;
  if (grid.dim_x() == 1) {
    const Grid1D& gx = grid.grids_x[0];
    const double ih2 = 1.0 / (gx.h * gx.h);
    for (int k = 0; k < n; ++k) {
      const int ix = op.map.nodes[k];
      op.potential[k] = potential_at(grid, b, mu, gamma, ix);
      trips.emplace_back(k, k, 2.0 * ih2 + op.potential[k]);
      if (op.map.row_of[ix - 1] >= 0) trips.emplace_back(k, op.map.row_of[ix - 1], -ih2);
      if (op.map.row_of[ix + 1] >= 0) trips.emplace_back(k, op.map.row_of[ix + 1], -ih2);
    }
  } else {
    const Grid1D& g0 = grid.grids_x[0];
    const Grid1D& g1 = grid.grids_x[1];
    const int n1 = g1.n;
    const double ih0 = 1.0 / (g0.h * g0.h), ih1 = 1.0 / (g1.h * g1.h);
    for (int k = 0; k < n; ++k) {
      const int ix = op.map.nodes[k];
      op.potential[k] = potential_at(grid, b, mu, gamma, ix);
      trips.emplace_back(k, k, 2.0 * (ih0 + ih1) + op.potential[k]);
      const int nb[4] = {ix - n1, ix + n1, ix - 1, ix + 1};
      const double cf[4] = {-ih0, -ih0, -ih1, -ih1};
      for (int t = 0; t < 4; ++t)
        if (op.map.row_of[nb[t]] >= 0) trips.emplace_back(k, op.map.row_of[nb[t]], cf[t]);
    }
  }
  op.A.resize(n, n);
  op.A.setFromTriplets(trips.begin(), trips.end());
  return op;
}

double ModeOperator::quad_weight() const {
  double w = 1.0;
  for (const auto& g : grid->grids_x) w *= g.h;
  return w;
}

EigenResult smallest_eigenvalue(const ModeOperator& op, double tol, int max_outer,
                                const Vec* start) {
  const int n = op.size();
  require(n > 0, Errc::invalid_argument, "empty operator");
  Vec inv_diag(n);
  for (int k = 0; k < n; ++k) inv_diag[k] = 1.0 / op.A.coeff(k, k);
  Vec v = start ? *start : Vec::Ones(n);
  v.normalize();
  Vec w = v;  // warm start across outer iterations
  double lambda = 0.0, lambda_prev = -1.0;
  auto apply = [&](const Vec& x, Vec& y) { y = op.A * x; };
  const int cg_cap = 20 * n + 500;
  for (int it = 0; it < max_outer; ++it) {
    CgResult cg = conjugate_gradient(apply, v, w, 1e-12, cg_cap, &inv_diag);
    if (!cg.converged && cg.residual > 1e-8)
      fail(Errc::numerical, "inner CG stalled in inverse power iteration, residual " +
                                std::to_string(cg.residual));
    const double wn = w.norm();
    require(wn > 0.0, Errc::numerical, "inverse power iterate vanished");
    // A w = v  =>  Rayleigh(w) = w.v / w.w
    lambda = w.dot(v) / w.squaredNorm();
    v = w / wn;
    if (lambda_prev > 0.0 && std::abs(lambda - lambda_prev) <= tol * std::abs(lambda)) {
      Vec Av = op.A * v;
      EigenResult res;
      res.lambda = v.dot(Av);
      res.vector = v;
      res.iterations = it + 1;
      res.residual = (Av - res.lambda * v).norm() / std::abs(res.lambda);
      require(res.lambda > 0.0, Errc::numerical, "operator not positive definite");
      return res;
    }
    lambda_prev = lambda;
  }
  fail(Errc::numerical, "inverse power iteration did not converge within " +
                            std::to_string(max_outer) + " iterations; last lambda " +
                            std::to_string(lambda));
}

ScalingFit fit_scaling_law(const std::vector<std::pair<double, double>>& pairs, double gamma) {
  require(pairs.size() >= 5, Errc::invalid_argument, "need at least 5 (mu, lambda) pairs");
  double mu_min = kInf, mu_max = 0.0;
  for (const auto& [mu, lam] : pairs) {
    require(mu > 0.0 && lam > 0.0, Errc::invalid_argument, "pairs must be positive");
    mu_min = std::min(mu_min, mu);
    mu_max = std::max(mu_max, mu);
  }
  require(mu_max / mu_min >= 1e3, Errc::invalid_argument,
          "mu values must span at least 3 decades");
  ScalingFit fit;
  fit.pairs = pairs;
  fit.gamma = gamma;
  const double n = static_cast<double>(pairs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double expo = 1.0 / (1.0 + gamma);
  fit.c_star = kInf;
  fit.c_star_upper = 0.0;
  for (const auto& [mu, lam] : pairs) {
    const double x = std::log(mu), y = std::log(lam);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    const double ratio = lam * std::pow(mu, -expo);
    fit.c_star = std::min(fit.c_star, ratio);
    fit.c_star_upper = std::max(fit.c_star_upper, ratio);
  }
  fit.exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return fit;
}

Vec FullOperator::restrict_full(const Vec& field) const {
  Vec v(size());
  for (int kx = 0; kx < map_x.size(); ++kx)
    for (int ky = 0; ky < niy; ++ky)
      v[row(kx, ky)] = field[grid->flat(map_x.nodes[kx], ky + 1)];
  return v;
}

Vec FullOperator::extend_zero(const Vec& interior) const {
  Vec v = Vec::Zero(grid->total());
  for (int kx = 0; kx < map_x.size(); ++kx)
    for (int ky = 0; ky < niy; ++ky)
      v[grid->flat(map_x.nodes[kx], ky + 1)] = interior[row(kx, ky)];
  return v;
}

double FullOperator::quad_weight() const {
  double w = grid->grid_y.h;
  for (const auto& g : grid->grids_x) w *= g.h;
  return w;
}

FullOperator assemble_full_operator(const TensorGrid& grid, double gamma,
                                    const CoefficientB& b) {
  require(gamma > 0.0 && gamma <= 1.0, Errc::invalid_argument, "gamma must lie in (0, 1]");
  FullOperator op;
  op.gamma = gamma;
  op.grid = &grid;
  op.map_x = interior_map_x(grid);
  op.niy = grid.ny() - 2;
  const int nix = op.map_x.size();
  const double ihy2 = 1.0 / (grid.grid_y.h * grid.grid_y.h);
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(op.size()) * 7);
  for (int kx = 0; kx < nix; ++kx) {
    const int ix = op.map_x.nodes[kx];
    const double pot = potential_at(grid, b, 1.0, gamma, ix);  // |x|^(2g) b(x)
    // x-direction Laplacian stencil on this column of y rows
    std::vector<std::pair<int, double>> xst;
    if (grid.dim_x() == 1) {
      const double ih2 = 1.0 / (grid.grids_x[0].h * grid.grids_x[0].h);
      xst.push_back({kx, 2.0 * ih2});
      if (op.map_x.row_of[ix - 1] >= 0) xst.push_back({op.map_x.row_of[ix - 1], -ih2});
      if (op.map_x.row_of[ix + 1] >= 0) xst.push_back({op.map_x.row_of[ix + 1], -ih2});
    } else {
      const int n1 = grid.grids_x[1].n;
      const double ih0 = 1.0 / (grid.grids_x[0].h * grid.grids_x[0].h);
      const double ih1 = 1.0 / (grid.grids_x[1].h * grid.grids_x[1].h);
      xst.push_back({kx, 2.0 * (ih0 + ih1)});
      const int nb[4] = {ix - n1, ix + n1, ix - 1, ix + 1};
      const double cf[4] = {-ih0, -ih0, -ih1, -ih1};
      for (int t = 0; t < 4; ++t)
        if (op.map_x.row_of[nb[t]] >= 0) xst.push_back({op.map_x.row_of[nb[t]], cf[t]});
    }
    for (int ky = 0; ky < op.niy; ++ky) {
      const int r = op.row(kx, ky);
      for (const auto& [kxn, cf] : xst) trips.emplace_back(r, op.row(kxn, ky), cf);
      trips.emplace_back(r, r, pot * 2.0 * ihy2);
      if (ky > 0) trips.emplace_back(r, op.row(kx, ky - 1), -pot * ihy2);
      if (ky + 1 < op.niy) trips.emplace_back(r, op.row(kx, ky + 1), -pot * ihy2);
    }
  }
  op.A.resize(op.size(), op.size());
  op.A.setFromTriplets(trips.begin(), trips.end());
  return op;
}

}  // namespace grushin
