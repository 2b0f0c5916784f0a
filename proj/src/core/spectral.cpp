#include "core/spectral.hpp"

#include <Eigen/Eigenvalues>

namespace grushin {

namespace {

double max_offdiag_defect(const ModeBasis& b) {
  double defect = 0.0;
  for (int m = 0; m < b.count; ++m) {
    for (int n = m; n < b.count; ++n) {
      double ip = b.inner(b.phi.col(m), b.phi.col(n));
      defect = std::max(defect, std::abs(ip - (m == n ? 1.0 : 0.0)));
    }
  }
  return defect;
}

void renormalize(ModeBasis& b) {
  // Gram-Schmidt under the grid quadrature, applied only when sampling left a
  // visible defect.
  for (int n = 0; n < b.count; ++n) {
    Vec v = b.phi.col(n);
    for (int m = 0; m < n; ++m) v -= b.inner(b.phi.col(m), v) * b.phi.col(m);
    double nrm = std::sqrt(b.inner(v, v));
    require(nrm > 0.0, Errc::numerical, "mode basis degenerated during re-orthonormalization");
    b.phi.col(n) = v / nrm;
  }
}

void finalize(ModeBasis& b) {
  b.orthonormality_defect = max_offdiag_defect(b);
  if (b.orthonormality_defect > 1e-10) {
    renormalize(b);
    b.orthonormality_defect = max_offdiag_defect(b);
  }
  require(b.orthonormality_defect <= 1e-8, Errc::numerical,
          "mode basis orthonormality defect above 1e-8");
}

}  // namespace

double ModeBasis::inner(const Vec& u, const Vec& v) const {
  double acc = 0.0;
  for (int i = 0; i < grid_y->n; ++i) acc += grid_y->quad_weight(i) * u[i] * v[i];
  return acc;
}

Vec ModeBasis::analyze_row(const Vec& y_samples) const {
  Vec c(count);
  for (int n = 0; n < count; ++n) c[n] = inner(y_samples, phi.col(n));
  return c;
}

ModeBasis dirichlet_eigenpairs(const Grid1D& grid_y, int count) {
  require(count >= 1, Errc::invalid_argument, "mode count must be positive");
  require(count <= grid_y.interior_count() / 2, Errc::invalid_argument,
          "requested modes exceed half the interior node count (under-resolved)");
  ModeBasis b;
  b.grid_y = &grid_y;
  b.count = count;
  b.mu.resize(count);
  b.phi.setZero(grid_y.n, count);
  const double L = grid_y.length();
  for (int n = 0; n < count; ++n) {
    const double k = (n + 1) * M_PI / L;
    b.mu[n] = k * k;
    for (int i = 1; i + 1 < grid_y.n; ++i)
      b.phi(i, n) = std::sin(k * (grid_y.nodes[i] - grid_y.a));
    double nrm = std::sqrt(b.inner(b.phi.col(n), b.phi.col(n)));
    b.phi.col(n) /= nrm;
  }
  finalize(b);
  return b;
}

ModeBasis dirichlet_eigenpairs_fd(const Grid1D& grid_y, int count) {
  require(count >= 1, Errc::invalid_argument, "mode count must be positive");
  const int m = grid_y.interior_count();
  require(count <= m / 2, Errc::invalid_argument,
          "requested modes exceed half the interior node count (under-resolved)");
  // Dense eigensolve of the m x m tridiagonal Laplacian; desk-scale grids only.
  Mat A = Mat::Zero(m, m);
  const double ih2 = 1.0 / (grid_y.h * grid_y.h);
  for (int i = 0; i < m; ++i) {
    A(i, i) = 2.0 * ih2;
    if (i > 0) A(i, i - 1) = -ih2;
    if (i + 1 < m) A(i, i + 1) = -ih2;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(A);
  require(es.info() == Eigen::Success, Errc::numerical, "FD eigensolve failed");
  ModeBasis b;
  b.grid_y = &grid_y;
  b.count = count;
  b.mu = es.eigenvalues().head(count);
  b.phi.setZero(grid_y.n, count);
  for (int n = 0; n < count; ++n) {
    b.phi.block(1, n, m, 1) = es.eigenvectors().col(n);
    double nrm = std::sqrt(b.inner(b.phi.col(n), b.phi.col(n)));
    b.phi.col(n) /= nrm;
    // sign convention: first interior sample positive
    if (b.phi(1, n) < 0) b.phi.col(n) = -b.phi.col(n);
  }
  finalize(b);
  return b;
}

BlockIndex block_members(const ModeBasis& basis, int j) {
  require(j >= 1, Errc::invalid_argument, "block index must be >= 1");
  BlockIndex blk;
  blk.j = j;
  blk.cutoff = std::pow(2.0, 2 * j);
  for (int n = 0; n < basis.count; ++n)
    if (basis.mu[n] <= blk.cutoff) blk.members.push_back(n);
  return blk;
}

ModeField analyze_field(const TensorGrid& grid, const ModeBasis& basis, const Vec& field) {
  require(field.size() == grid.total(), Errc::invalid_argument,
          "field size does not match grid");
  const int nx = grid.nx(), ny = grid.ny();
  ModeField mf;
  mf.coeff.setZero(nx, basis.count);
  Vec row(ny);
  for (int ix = 0; ix < nx; ++ix) {
    for (int iy = 0; iy < ny; ++iy) row[iy] = field[grid.flat(ix, iy)];
    mf.coeff.row(ix) = basis.analyze_row(row).transpose();
  }
  return mf;
}

Vec synthesize_field(const TensorGrid& grid, const ModeBasis& basis, const ModeField& mf) {
  require(mf.nx() == grid.nx() && mf.n_modes() <= basis.count, Errc::invalid_argument,
          "mode field does not match grid/basis");
  const int nx = grid.nx(), ny = grid.ny();
  Vec field = Vec::Zero(grid.total());
  for (int ix = 0; ix < nx; ++ix)
    for (int iy = 0; iy < ny; ++iy) {
      double acc = 0.0;
      for (int n = 0; n < mf.n_modes(); ++n) acc += mf.coeff(ix, n) * basis.phi(iy, n);
      field[grid.flat(ix, iy)] = acc;
    }
  return field;
}

Vec project_block(const TensorGrid& grid, const ModeBasis& basis, int j, const Vec& field) {
  BlockIndex blk = block_members(basis, j);
  ModeField mf = analyze_field(grid, basis, field);
  ModeField restricted;
  restricted.coeff.setZero(mf.nx(), basis.count);
  for (int n : blk.members) restricted.coeff.col(n) = mf.coeff.col(n);
  return synthesize_field(grid, basis, restricted);
}

Mat restricted_mass(const ModeBasis& basis, const IndexSet& omega2, int count) {
  require(count <= basis.count, Errc::invalid_argument, "count exceeds basis size");
  Mat M = Mat::Zero(count, count);
  for (int i : omega2.indices) {
    const double w = basis.grid_y->quad_weight(i);
    for (int m = 0; m < count; ++m)
      for (int n = m; n < count; ++n) M(m, n) += w * basis.phi(i, m) * basis.phi(i, n);
  }
  for (int m = 0; m < count; ++m)
    for (int n = 0; n < m; ++n) M(m, n) = M(n, m);
  return M;
}

SpectralIneqReport spectral_inequality_constant(const ModeBasis& basis,
                                                const IndexSet& omega2, double mu) {
  require(!omega2.indices.empty(), Errc::invalid_argument, "empty observation subdomain");
  int k = 0;
  while (k < basis.count && basis.mu[k] <= mu) ++k;
  require(k >= 1, Errc::invalid_argument, "no modes below the requested frequency");
  Mat M = restricted_mass(basis, omega2, k);
  Eigen::SelfAdjointEigenSolver<Mat> es(M);
  require(es.info() == Eigen::Success, Errc::numerical, "restricted mass eigensolve failed");
  const double lmin = es.eigenvalues()(0);
  const double lmax = es.eigenvalues()(k - 1);
  if (!(lmin > 1e-14 * std::max(lmax, 1.0))) {
    fail(Errc::numerical,
         "restricted mass form numerically singular: lambda_min=" + std::to_string(lmin) +
             " lambda_max=" + std::to_string(lmax));
  }
  SpectralIneqReport rep;
  rep.c_emp = 1.0 / lmin;
  rep.log_c_over_sqrt_mu = std::log(rep.c_emp) / std::sqrt(mu);
  rep.modes_below_mu = k;
  rep.mass_condition = lmax / lmin;
  return rep;
}

}  // namespace grushin
