#pragma once

#include "core/domain.hpp"

namespace grushin {

/// Dirichlet eigenpairs of -d2/dy2 on the y grid. Eigenvector samples are
/// normalized against the grid quadrature, so discrete Parseval identities
/// hold to rounding.
struct ModeBasis {
  const Grid1D* grid_y = nullptr;
  Vec mu;        // eigenvalues, nondecreasing, mu[0] > 0
  Mat phi;       // ny x count samples, zero on boundary rows
  int count = 0;
  double orthonormality_defect = 0.0;

  double inner(const Vec& u, const Vec& v) const;
  /// Coefficients <field(x, .), phi_n> for one x row of samples.
  Vec analyze_row(const Vec& y_samples) const;
};

/// Analytic sine eigenpairs when Omega2 is an interval, re-normalized under
/// the grid quadrature. Errors when the grid cannot resolve `count` modes.
ModeBasis dirichlet_eigenpairs(const Grid1D& grid_y, int count);

/// Finite-difference eigensolve of the tridiagonal Dirichlet Laplacian.
/// Same contract as dirichlet_eigenpairs; kept as an independent route.
ModeBasis dirichlet_eigenpairs_fd(const Grid1D& grid_y, int count);

/// Dyadic frequency block E_j = span{ phi_n : mu_n <= 2^(2j) }.
struct BlockIndex {
  int j = 0;
  double cutoff = 0.0;        // 2^(2j)
  std::vector<int> members;   // 0-based mode indices, mu_n <= cutoff
};

BlockIndex block_members(const ModeBasis& basis, int j);

/// Tensor field as mode-stacked x profiles: coeff(ix, n) = <u(x_ix, .), phi_n>.
struct ModeField {
  Mat coeff;  // nx x n_modes

  int nx() const { return static_cast<int>(coeff.rows()); }
  int n_modes() const { return static_cast<int>(coeff.cols()); }
};

/// Mode analysis of a flattened tensor field (x-major, size nx*ny).
ModeField analyze_field(const TensorGrid& grid, const ModeBasis& basis, const Vec& field);

/// Synthesis back to a flattened tensor field (boundary y rows come out zero).
Vec synthesize_field(const TensorGrid& grid, const ModeBasis& basis, const ModeField& mf);

/// Orthogonal projection of a flattened tensor field onto E_j.
Vec project_block(const TensorGrid& grid, const ModeBasis& basis, int j, const Vec& field);

/// y-mass matrix restricted to a subdomain: M_mn = int_{omega2} phi_m phi_n dy
/// under grid quadrature, for the first `count` modes.
Mat restricted_mass(const ModeBasis& basis, const IndexSet& omega2, int count);

struct SpectralIneqReport {
  double c_emp = 0.0;            // max |b|^2 / int_{omega2} |sum b_k phi_k|^2
  double log_c_over_sqrt_mu = 0.0;
  int modes_below_mu = 0;
  double mass_condition = 0.0;   // lambda_max / lambda_min of the restricted mass form
};

/// Empirical constant of the spectral inequality at frequency cutoff mu:
/// the largest eigenvalue of the pencil (identity, restricted mass form).
SpectralIneqReport spectral_inequality_constant(const ModeBasis& basis,
                                                const IndexSet& omega2, double mu);

}  // namespace grushin
