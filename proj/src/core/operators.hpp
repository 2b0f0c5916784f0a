#pragma once

#include "core/domain.hpp"

namespace grushin {

/// Strictly positive coefficient b sampled on the (flattened) x nodes.
struct CoefficientB {
  Vec samples;
  double b_min = 0.0;
  double b_max = 0.0;
};

CoefficientB constant_b(const TensorGrid& grid, double value);
CoefficientB sampled_b(const TensorGrid& grid, const Vec& samples);

/// Mapping between full flattened x nodes and the Dirichlet-eliminated
/// interior system.
struct InteriorMapX {
  std::vector<int> nodes;       // interior flattened-x node per system row
  std::vector<int> row_of;      // size nx, -1 on boundary nodes

  int size() const { return static_cast<int>(nodes.size()); }
  Vec restrict_full(const Vec& full) const;
  Vec extend_zero(const Vec& interior, int nx_full) const;
};

InteriorMapX interior_map_x(const TensorGrid& grid);

/// G_{n,gamma} = -Laplace_x + mu_n |x|^(2 gamma) b(x), second-order centered
/// differences, homogeneous Dirichlet rows eliminated.
struct ModeOperator {
  double mu = 0.0;
  double gamma = 0.0;
  const TensorGrid* grid = nullptr;
  InteriorMapX map;
  SpMat A;          // symmetric positive definite on the interior system
  Vec potential;    // diagonal part mu |x|^(2 gamma) b(x), per system row

  int size() const { return map.size(); }
  void apply(const Vec& u, Vec& out) const { out = A * u; }
  /// Quadrature weight of one interior row (uniform grid: product of h's).
  double quad_weight() const;
};

ModeOperator assemble_mode_operator(const TensorGrid& grid, double mu, double gamma,
                                    const CoefficientB& b);

struct EigenResult {
  double lambda = 0.0;
  Vec vector;        // interior system, unit norm
  int iterations = 0;
  double residual = 0.0;  // ||A v - lambda v|| / lambda
};

/// Smallest eigenvalue by inverse power iteration with CG inner solves.
/// `tol` is the relative eigenvalue tolerance (default 1e-10 at call sites).
EigenResult smallest_eigenvalue(const ModeOperator& op, double tol = 1e-10,
                                int max_outer = 600, const Vec* start = nullptr);

struct ScalingFit {
  std::vector<std::pair<double, double>> pairs;  // (mu, lambda)
  double exponent = 0.0;       // least-squares slope of log lambda vs log mu
  double c_star = 0.0;         // min lambda * mu^(-1/(1+gamma))
  double c_star_upper = 0.0;   // max of the same ratio
  double gamma = 0.0;
};

/// Least-squares fit of the dissipation scaling law over (mu, lambda) pairs.
/// Requires >= 5 pairs spanning >= 3 decades of mu.
ScalingFit fit_scaling_law(const std::vector<std::pair<double, double>>& pairs, double gamma);

/// Full Grushin operator on the Dirichlet-eliminated tensor grid:
/// -Laplace_x (x) I  +  diag(|x|^(2 gamma) b) (x) (-Laplace_y).
struct FullOperator {
  double gamma = 0.0;
  const TensorGrid* grid = nullptr;
  InteriorMapX map_x;           // interior x nodes
  int niy = 0;                  // interior y nodes
  SpMat A;

  int size() const { return map_x.size() * niy; }
  int row(int kx, int ky) const { return kx * niy + ky; }
  Vec restrict_full(const Vec& field) const;    // nx*ny -> interior
  Vec extend_zero(const Vec& interior) const;   // interior -> nx*ny
  double quad_weight() const;                   // uniform interior weight
};

FullOperator assemble_full_operator(const TensorGrid& grid, double gamma,
                                    const CoefficientB& b);

}  // namespace grushin
