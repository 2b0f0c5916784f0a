#include "core/carleman.hpp"

#include <algorithm>

namespace grushin {

SignedLog log_exp_diff(double p1, double p0) {
  if (p1 == p0) return {0, -kInf};
  const double m = std::max(p1, p0);
  const double d = std::abs(p1 - p0);
  return {p1 > p0 ? 1 : -1, m + std::log1p(-std::exp(-d))};
}

namespace {

/// One axis of the bump: q(x) = (x-A)(B-x) e^(k x) with the tilt k chosen to
/// put the single interior critical point at `vertex`.
struct AxisBump {
  double A, B, k;

  double value(double x) const { return (x - A) * (B - x) * std::exp(k * x); }
  double d1(double x) const {
    return ((A + B - 2.0 * x) + k * (x - A) * (B - x)) * std::exp(k * x);
  }
  double d2(double x) const {
    const double q = (A + B - 2.0 * x) + k * (x - A) * (B - x);
    const double qp = -2.0 + k * (A + B - 2.0 * x);
    return (qp + k * q) * std::exp(k * x);
  }
};

AxisBump make_axis_bump(const Grid1D& g, double vertex) {
  AxisBump bump{g.a, g.b, 0.0};
  const double denom = (vertex - g.a) * (g.b - vertex);
  require(denom > 0.0, Errc::invalid_argument, "bump vertex must be interior");
  bump.k = (2.0 * vertex - g.a - g.b) / denom;
  return bump;
}

double spectral_norm_2x2(double axx, double axy, double ayy) {
  const double tr = axx + ayy;
  const double det = axx * ayy - axy * axy;
  const double disc = std::sqrt(std::max(tr * tr / 4.0 - det, 0.0));
  return std::max(std::abs(tr / 2.0 + disc), std::abs(tr / 2.0 - disc));
}

double min_eig_2x2(double axx, double axy, double ayy) {
  const double tr = axx + ayy;
  const double det = axx * ayy - axy * axy;
  const double disc = std::sqrt(std::max(tr * tr / 4.0 - det, 0.0));
  return tr / 2.0 - disc;
}

bool strictly_inside(const std::vector<double>& c, const Box& box) {
  for (std::size_t d = 0; d < c.size(); ++d) {
    const auto& [lo, hi] = box.intervals[d];
    if (!(c[d] > lo && c[d] < hi)) return false;
  }
  return true;
}

/// lhs of inequality (ii) at a node, factored as value * e^(lambda psi):
/// min eigenvalue of (a-1)(lam^2|grad psi|^2 + lam lap psi) I
///                 + 2 lam^2 grad psi (x) grad psi + 2 lam D2 psi.
SignedLog lhs_ii(const PsiFunction& psi, double a, double lambda, int ix) {
  const double lp = lambda * psi.psi[ix];
  if (psi.grid->dim_x() == 1) {
    const double g = psi.grad(ix, 0);
    const double val = (1.0 + a) * (lambda * lambda * g * g + lambda * psi.hess(ix, 0));
    return SignedLog::from_scaled(val, lp);
  }
  const double g0 = psi.grad(ix, 0), g1 = psi.grad(ix, 1);
  const double common = (a - 1.0) * (lambda * lambda * (g0 * g0 + g1 * g1) +
                                     lambda * (psi.hess(ix, 0) + psi.hess(ix, 2)));
  const double axx = common + 2.0 * lambda * lambda * g0 * g0 + 2.0 * lambda * psi.hess(ix, 0);
  const double axy = 2.0 * lambda * lambda * g0 * g1 + 2.0 * lambda * psi.hess(ix, 1);
  const double ayy = common + 2.0 * lambda * lambda * g1 * g1 + 2.0 * lambda * psi.hess(ix, 2);
  return SignedLog::from_scaled(min_eig_2x2(axx, axy, ayy), lp);
}

/// lhs of inequality (iii), factored as value * e^(3 lambda psi):
/// lam^3 [ (3-a) lam |grad|^4 - (a-1) (lap psi) |grad|^2 + 2 D2psi(grad, grad) ].
SignedLog lhs_iii(const PsiFunction& psi, double a, double lambda, int ix) {
  const double lp3 = 3.0 * lambda * psi.psi[ix];
  double g2, dterm, lap = psi.lap(ix);
  if (psi.grid->dim_x() == 1) {
    const double g = psi.grad(ix, 0);
    g2 = g * g;
    dterm = psi.hess(ix, 0) * g2;
  } else {
    const double g0 = psi.grad(ix, 0), g1 = psi.grad(ix, 1);
    g2 = g0 * g0 + g1 * g1;
    dterm = psi.hess(ix, 0) * g0 * g0 + 2.0 * psi.hess(ix, 1) * g0 * g1 +
            psi.hess(ix, 2) * g1 * g1;
  }
  const double val =
      std::pow(lambda, 3) * ((3.0 - a) * lambda * g2 * g2 - (a - 1.0) * lap * g2 + 2.0 * dterm);
  return SignedLog::from_scaled(val, lp3);
}

struct MarginScan {
  double min_log_ratio_ii = kInf;
  double min_log_ratio_iii = kInf;
  SignedLog min_lhs_ii{1, kInf};
  SignedLog min_lhs_iii{1, kInf};
  bool all_positive = true;
  std::vector<int> offending;
};

MarginScan scan_interior_margins(const PsiFunction& psi, double a, double lambda,
                                 double log_C1, double log_C3) {
  MarginScan s;
  for (int ix : psi.outside_nodes()) {
    const SignedLog ii = lhs_ii(psi, a, lambda, ix);
    const SignedLog iii = lhs_iii(psi, a, lambda, ix);
    if (ii.sign <= 0 || iii.sign <= 0) {
      s.all_positive = false;
      s.offending.push_back(ix);
      s.min_log_ratio_ii = -kInf;
      s.min_log_ratio_iii = -kInf;
      continue;
    }
    if (ii.log_abs < s.min_lhs_ii.log_abs) s.min_lhs_ii = ii;
    if (iii.log_abs < s.min_lhs_iii.log_abs) s.min_lhs_iii = iii;
    s.min_log_ratio_ii = std::min(s.min_log_ratio_ii, ii.log_abs - log_C1);
    s.min_log_ratio_iii = std::min(s.min_log_ratio_iii, iii.log_abs - log_C3);
  }
  return s;
}

bool signed_log_less(const SignedLog& a, const SignedLog& b) {
  if (a.sign != b.sign) return a.sign < b.sign;
  if (a.sign > 0) return a.log_abs < b.log_abs;
  if (a.sign < 0) return a.log_abs > b.log_abs;
  return false;
}

SignedLog boundary_scan(const PsiFunction& psi, double lambda, bool* ok) {
  // One-sided difference of beta toward the outward normal; the e^(2 lambda
  // ||psi||) offset cancels, leaving e^(lam psi_boundary) - e^(lam psi_inner).
  const TensorGrid& grid = *psi.grid;
  SignedLog worst{1, kInf};
  *ok = true;
  auto consider = [&](int ib, int iin, double h) {
    SignedLog d = log_exp_diff(lambda * psi.psi[iin], lambda * psi.psi[ib]);
    d.log_abs -= std::log(h);
    if (d.sign < 0) *ok = false;
    if (signed_log_less(d, worst)) worst = d;
  };
  if (grid.dim_x() == 1) {
    const Grid1D& g = grid.grids_x[0];
    consider(0, 1, g.h);
    consider(g.n - 1, g.n - 2, g.h);
  } else {
    const Grid1D& g0 = grid.grids_x[0];
    const Grid1D& g1 = grid.grids_x[1];
    for (int i1 = 1; i1 + 1 < g1.n; ++i1) {
      consider(0 * g1.n + i1, 1 * g1.n + i1, g0.h);
      consider((g0.n - 1) * g1.n + i1, (g0.n - 2) * g1.n + i1, g0.h);
    }
    for (int i0 = 1; i0 + 1 < g0.n; ++i0) {
      consider(i0 * g1.n + 0, i0 * g1.n + 1, g1.h);
      consider(i0 * g1.n + (g1.n - 1), i0 * g1.n + (g1.n - 2), g1.h);
    }
  }
  return worst;
}

/// Gradient of an interior-system vector by centered differences; Dirichlet
/// values outside the interior are zero.
Mat interior_gradient(const ModeOperator& op, const Vec& u) {
  const TensorGrid& grid = *op.grid;
  const int n = op.size();
  Mat g(n, grid.dim_x());
  auto val = [&](int ix) {
    const int r = op.map.row_of[ix];
    return r >= 0 ? u[r] : 0.0;
  };
  if (grid.dim_x() == 1) {
    const double ih2 = 0.5 / grid.grids_x[0].h;
    for (int k = 0; k < n; ++k) {
      const int ix = op.map.nodes[k];
      g(k, 0) = (val(ix + 1) - val(ix - 1)) * ih2;
    }
  } else {
    const int n1 = grid.grids_x[1].n;
    const double ih0 = 0.5 / grid.grids_x[0].h;
    const double ih1 = 0.5 / grid.grids_x[1].h;
    for (int k = 0; k < n; ++k) {
      const int ix = op.map.nodes[k];
      g(k, 0) = (val(ix + n1) - val(ix - n1)) * ih0;
      g(k, 1) = (val(ix + 1) - val(ix - 1)) * ih1;
    }
  }
  return g;
}

}  // namespace

bool PsiFunction::node_outside_tilde(int ix) const {
  return !strictly_inside(grid->x_coords(ix), omega1_tilde_box);
}

double PsiFunction::lap(int ix) const {
  return grid->dim_x() == 1 ? hess(ix, 0) : hess(ix, 0) + hess(ix, 2);
}

std::vector<int> PsiFunction::outside_nodes() const {
  std::vector<int> out;
  const int nx = grid->nx();
  for (int ix = 0; ix < nx; ++ix) {
    if (!node_outside_tilde(ix)) continue;
    if (grid->dim_x() == 2) {
      const int n1 = grid->grids_x[1].n;
      const int i0 = ix / n1, i1 = ix % n1;
      const bool corner = grid->grids_x[0].boundary[i0] && grid->grids_x[1].boundary[i1];
      if (corner) continue;
    }
    out.push_back(ix);
  }
  return out;
}

PsiFunction construct_psi(const TensorGrid& grid, const Box& omega1_tilde_box) {
  require(static_cast<int>(omega1_tilde_box.intervals.size()) == grid.dim_x(),
          Errc::invalid_argument, "omega1_tilde box must match the x dimension");
  PsiFunction psi;
  psi.grid = &grid;
  psi.omega1_tilde_box = omega1_tilde_box;
  psi.omega1_tilde = subdomain_indices_x(grid, omega1_tilde_box);

  std::vector<AxisBump> bumps;
  for (int d = 0; d < grid.dim_x(); ++d) {
    const auto& [lo, hi] = omega1_tilde_box.intervals[d];
    const Grid1D& g = grid.grids_x[d];
    require(lo > g.a && hi < g.b, Errc::invalid_argument,
            "omega1_tilde must be strictly interior");
    bumps.push_back(make_axis_bump(g, 0.5 * (lo + hi)));
  }

  const int nx = grid.nx();
  psi.psi.resize(nx);
  psi.grad.resize(nx, grid.dim_x());
  psi.hess.resize(nx, grid.dim_x() == 1 ? 1 : 3);
  for (int ix = 0; ix < nx; ++ix) {
    const auto c = grid.x_coords(ix);
    if (grid.dim_x() == 1) {
      psi.psi[ix] = bumps[0].value(c[0]);
      psi.grad(ix, 0) = bumps[0].d1(c[0]);
      psi.hess(ix, 0) = bumps[0].d2(c[0]);
    } else {
      const double v0 = bumps[0].value(c[0]), v1 = bumps[1].value(c[1]);
      const double d0 = bumps[0].d1(c[0]), d1 = bumps[1].d1(c[1]);
      psi.psi[ix] = v0 * v1;
      psi.grad(ix, 0) = d0 * v1;
      psi.grad(ix, 1) = v0 * d1;
      psi.hess(ix, 0) = bumps[0].d2(c[0]) * v1;
      psi.hess(ix, 1) = d0 * d1;
      psi.hess(ix, 2) = v0 * bumps[1].d2(c[1]);
    }
    if (grid.x_is_boundary(ix)) {
      psi.psi[ix] = 0.0;  // exact by construction; clear rounding residue
    } else {
      require(psi.psi[ix] > 0.0, Errc::verification, "psi must be positive in the interior");
    }
  }
  psi.psi_max = psi.psi.maxCoeff();

  psi.m_star = kInf;
  psi.m_upper = 0.0;
  for (int ix : psi.outside_nodes()) {
    double gn, hn;
    if (grid.dim_x() == 1) {
      gn = std::abs(psi.grad(ix, 0));
      hn = std::abs(psi.hess(ix, 0));
    } else {
      gn = std::hypot(psi.grad(ix, 0), psi.grad(ix, 1));
      hn = spectral_norm_2x2(psi.hess(ix, 0), psi.hess(ix, 1), psi.hess(ix, 2));
    }
    psi.m_star = std::min(psi.m_star, gn);
    psi.m_upper = std::max({psi.m_upper, gn, std::abs(psi.lap(ix)), hn});
  }
  require(psi.m_star > 0.0, Errc::verification,
          "psi critical point escaped omega1_tilde (|grad psi| vanishes outside)");
  return psi;
}

double CarlemanWeight::log_beta_min(const IndexSet& set) const {
  double m = kInf;
  for (int ix : set.indices) m = std::min(m, log_beta[ix]);
  return m;
}

double CarlemanWeight::beta_linear(int ix) const {
  require(log_beta[ix] < 700.0, Errc::numerical,
          "weight too steep for linear-scale evaluation (use a search-mode lambda)");
  return std::exp(log_beta[ix]);
}

SignedLog CarlemanWeight::beta_second(int ix) const {
  const double g2 = psi->grid->dim_x() == 1
                        ? psi->grad(ix, 0) * psi->grad(ix, 0)
                        : psi->grad(ix, 0) * psi->grad(ix, 0) + psi->grad(ix, 1) * psi->grad(ix, 1);
  const double u = lambda * lambda * g2 + lambda * psi->lap(ix);
  return SignedLog::from_scaled(-u, lambda * psi->psi[ix]);
}

namespace {

void fill_log_beta(CarlemanWeight& w) {
  const PsiFunction& psi = *w.psi;
  const int nx = psi.grid->nx();
  w.log_beta.resize(nx);
  const double big = 2.0 * w.lambda * psi.psi_max;
  for (int ix = 0; ix < nx; ++ix) {
    // beta = e^big - e^(lam psi) = e^big (1 - e^(lam psi - big)), lam psi <= big/2
    w.log_beta[ix] = big + std::log1p(-std::exp(w.lambda * psi.psi[ix] - big));
  }
  w.log_beta_max = w.log_beta.maxCoeff();
}

}  // namespace

CarlemanWeight calibrate_weight(const PsiFunction& psi, double a, WeightMode mode,
                                double lambda_max) {
  require(a > 1.0 && a < 3.0, Errc::invalid_argument, "a must lie in (1, 3)");
  CarlemanWeight w;
  w.a = a;
  w.mode = mode;
  w.psi = &psi;
  if (mode == WeightMode::paper) {
    const double ms = psi.m_star, mu = psi.m_upper;
    w.lambda = std::max(2.0 * (a + 1.0) * mu / ((a - 1.0) * ms * ms),
                        2.0 * (a + 1.0) * mu * mu * mu / ((3.0 - a) * std::pow(ms, 4)));
    w.C1 = (a - 1.0) * ms * ms * w.lambda * w.lambda / 2.0;
    w.C3 = (3.0 - a) * std::pow(ms, 4) * std::pow(w.lambda, 4) / 2.0;
  } else {
    auto feasible = [&](double lam) {
      return scan_interior_margins(psi, a, lam, 0.0, 0.0).all_positive;
    };
    double hi = 1.0;
    while (!feasible(hi)) {
      hi *= 2.0;
      if (hi > lambda_max)
        fail(Errc::verification, "weight search failed: no feasible lambda up to " +
                                     std::to_string(lambda_max));
    }
    double lo = hi / 2.0;
    if (hi == 1.0) lo = 0.0;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (feasible(mid)) hi = mid;
      else lo = mid;
    }
    w.lambda = 1.1 * hi;  // safety factor over the minimal feasible lambda
    MarginScan s = scan_interior_margins(psi, a, w.lambda, 0.0, 0.0);
    require(s.all_positive, Errc::verification, "weight search lost feasibility");
    require(s.min_lhs_ii.log_abs < 700.0 && s.min_lhs_iii.log_abs < 700.0, Errc::numerical,
            "achieved margins overflow linear scale");
    w.C1 = std::exp(s.min_lhs_ii.log_abs);
    w.C3 = std::exp(s.min_lhs_iii.log_abs);
  }
  fill_log_beta(w);
  WeightVerification v = verify_weight_inequalities(w);
  require(v.all_ok(), Errc::verification, "calibrated weight failed its own verification");
  return w;
}

CarlemanWeight weight_with_lambda(const PsiFunction& psi, double a, double lambda) {
  require(a > 1.0 && a < 3.0, Errc::invalid_argument, "a must lie in (1, 3)");
  require(lambda > 0.0, Errc::invalid_argument, "lambda must be positive");
  CarlemanWeight w;
  w.a = a;
  w.mode = WeightMode::search;
  w.psi = &psi;
  w.lambda = lambda;
  MarginScan s = scan_interior_margins(psi, a, lambda, 0.0, 0.0);
  w.C1 = (s.all_positive && s.min_lhs_ii.log_abs < 700.0) ? std::exp(s.min_lhs_ii.log_abs)
                                                          : 0.0;
  w.C3 = (s.all_positive && s.min_lhs_iii.log_abs < 700.0) ? std::exp(s.min_lhs_iii.log_abs)
                                                           : 0.0;
  fill_log_beta(w);
  return w;
}

WeightVerification verify_weight_inequalities(const CarlemanWeight& w, bool strict) {
  WeightVerification out;
  MarginScan s = scan_interior_margins(*w.psi, w.a, w.lambda, std::log(w.C1), std::log(w.C3));
  out.ii_ok = s.all_positive && s.min_log_ratio_ii >= 0.0;
  out.iii_ok = s.all_positive && s.min_log_ratio_iii >= 0.0;
  out.min_log_ratio_ii = s.min_log_ratio_ii;
  out.min_log_ratio_iii = s.min_log_ratio_iii;
  out.offending_nodes = s.offending;
  out.min_boundary = boundary_scan(*w.psi, w.lambda, &out.boundary_ok);
  if (strict && !out.all_ok()) {
    std::string nodes;
    for (std::size_t i = 0; i < out.offending_nodes.size() && i < 16; ++i)
      nodes += std::to_string(out.offending_nodes[i]) + " ";
    fail(Errc::verification, "weight inequalities violated (offending nodes: " + nodes + ")");
  }
  return out;
}

double carleman_M(double T, double mu, double gamma, double C2) {
  require(T > 0.0, Errc::invalid_argument, "T must be positive");
  require(mu >= 0.0, Errc::invalid_argument, "mu must be nonnegative");
  require(gamma > 0.0 && gamma <= 1.0, Errc::invalid_argument, "gamma must lie in (0,1]");
  const double base = T + T * T;
  const double freq = (gamma >= 0.5) ? std::sqrt(mu) * T * T : std::pow(mu, 2.0 / 3.0) * T * T;
  return C2 * std::max(base, freq);
}

int epsilon_branch(double gamma) { return gamma >= 0.5 ? 1 : 0; }

CarlemanParams make_carleman_params(double T0, double T1, double mu, double gamma, double C2) {
  require(T1 > T0, Errc::invalid_argument, "window must satisfy T1 > T0");
  CarlemanParams p;
  p.T0 = T0;
  p.T1 = T1;
  p.T = T1 - T0;
  p.mu = mu;
  p.gamma = gamma;
  p.epsilon = epsilon_branch(gamma);
  p.C2 = C2;
  p.M = carleman_M(p.T, mu, gamma, C2);
  return p;
}

CarlemanRatioReport carleman_ratio(const ModeOperator& op, const Trajectory& u,
                                   const Mat& Pu, const CarlemanWeight& w,
                                   const CarlemanParams& p, const IndexSet& omega1_x,
                                   double C1_cal) {
  require(std::abs(u.dt * u.steps - p.T) <= 1e-9 * p.T, Errc::invalid_argument,
          "trajectory must span exactly the Carleman window");
  require(Pu.rows() == u.states.rows() && Pu.cols() == u.states.cols(),
          Errc::invalid_argument, "Pu samples must match the trajectory");
  const int n = op.size();
  const double wq = op.quad_weight();
  // linear beta per interior row; overflows only for paper-mode lambda
  Vec beta(n);
  std::vector<char> in_omega(n, 0);
  for (int k = 0; k < n; ++k) {
    beta[k] = w.beta_linear(op.map.nodes[k]);
    in_omega[k] = omega1_x.contains(op.map.nodes[k]) ? 1 : 0;
  }
  LogSum lhs, rhs;
  CarlemanRatioReport rep;
  const double log_wq_dt = std::log(wq * u.dt);
  for (int k = 1; k < u.steps; ++k) {
    const double t = p.T0 + u.dt * k;  // trajectory time measured from T0
    const double s = p.s(t);
    const double log_M_s = std::log(p.M / s);
    const Mat g = interior_gradient(op, u.states.col(k));
    for (int i = 0; i < n; ++i) {
      const double ew = -p.M * beta[i] / s;
      if (k == 1 || k == u.steps - 1) rep.edge_log_weight = std::max(rep.edge_log_weight, ew);
      const double u2 = u.states(i, k) * u.states(i, k);
      const double g2 = g.row(i).squaredNorm();
      // lhs: C1 [ M/s |grad u|^2 + (M/s)^3 |u|^2 ] e^(-M alpha)
      lhs.add(safe_log(C1_cal * g2) + log_M_s + ew + log_wq_dt);
      lhs.add(safe_log(C1_cal * u2) + 3.0 * log_M_s + ew + log_wq_dt);
      // rhs: |P u|^2 e^(-M alpha) + 1_omega (M/s)^3 |u|^2 e^(-M alpha)
      rhs.add(safe_log(Pu(i, k) * Pu(i, k)) + ew + log_wq_dt);
      if (in_omega[i]) rhs.add(safe_log(u2) + 3.0 * log_M_s + ew + log_wq_dt);
    }
  }
  rep.log_lhs = lhs.log();
  rep.log_rhs = rhs.log();
  if (lhs.empty() && rhs.empty()) {
    rep.null_case = true;
    rep.ratio = 0.0;
    return rep;
  }
  if (rhs.empty())
    fail(Errc::verification, "Carleman ratio undefined: zero right-hand side with nonzero left");
  rep.ratio = std::exp(rep.log_lhs - rep.log_rhs);
  return rep;
}

P123Decomposition decompose_P123(const ModeOperator& op, const Mat& z, double dt,
                                 const CarlemanWeight& w, const CarlemanParams& p) {
  require(z.rows() == op.size(), Errc::invalid_argument, "field size mismatch");
  require(std::abs(op.mu - p.mu) <= 1e-12 * std::max(1.0, p.mu), Errc::invalid_argument,
          "operator and params disagree on mu");
  const int n = op.size();
  const int K = static_cast<int>(z.cols()) - 1;
  const PsiFunction& psi = *w.psi;
  // linear-scale weight data (benign lambda only)
  Vec beta(n), dbeta0(n), dbeta1(n), lapb(n);
  const bool two_d = psi.grid->dim_x() == 2;
  for (int i = 0; i < n; ++i) {
    const int ix = op.map.nodes[i];
    beta[i] = w.beta_linear(ix);
    const double e = std::exp(w.lambda * psi.psi[ix]);
    dbeta0[i] = -w.lambda * psi.grad(ix, 0) * e;
    dbeta1[i] = two_d ? -w.lambda * psi.grad(ix, 1) * e : 0.0;
    const double g2 = two_d ? psi.grad(ix, 0) * psi.grad(ix, 0) + psi.grad(ix, 1) * psi.grad(ix, 1)
                            : psi.grad(ix, 0) * psi.grad(ix, 0);
    lapb[i] = -(w.lambda * w.lambda * g2 + w.lambda * psi.lap(ix)) * e;
  }
  P123Decomposition out;
  out.epsilon = p.epsilon;
  out.P1.setZero(n, K + 1);
  out.P2.setZero(n, K + 1);
  out.P3.setZero(n, K + 1);
  double res2 = 0.0;
  const double wq = op.quad_weight();
  for (int k = 1; k < K; ++k) {
    const double t = p.T0 + dt * k;
    const double s = p.s(t);
    const double sp = p.T0 + p.T1 - 2.0 * t;
    const Vec zk = z.col(k);
    const Vec zt = (z.col(k + 1) - z.col(k - 1)) / (2.0 * dt);
    const Mat gz = interior_gradient(op, zk);
    const Vec lap_z = -(op.A * zk - op.potential.cwiseProduct(zk));  // A = -Lap + V
    for (int i = 0; i < n; ++i) {
      const double alpha_t = -beta[i] * sp / (s * s);
      const double ga0 = dbeta0[i] / s, ga1 = dbeta1[i] / s;
      const double grad_alpha2 = ga0 * ga0 + ga1 * ga1;
      const double lap_alpha = lapb[i] / s;
      const double pot = op.potential[i];  // mu |x|^(2 gamma) b
      const double grad_dot = two_d ? ga0 * gz(i, 0) + ga1 * gz(i, 1) : ga0 * gz(i, 0);
      out.P1(i, k) = -lap_z[i] + (p.M * alpha_t - p.M * p.M * grad_alpha2) * zk[i] +
                     p.epsilon * pot * zk[i];
      out.P2(i, k) = zt[i] - 2.0 * p.M * grad_dot - w.a * p.M * lap_alpha * zk[i];
      out.P3(i, k) = (w.a - 1.0) * p.M * lap_alpha * zk[i] + (1 - p.epsilon) * pot * zk[i];
    }
    // reference: e^(-M alpha) P_mu_gamma(u) with u = z e^(M alpha)
    Vec uk(n), ukm(n), ukp(n);
    auto u_at = [&](int kk, Vec& dst) {
      const double tt = p.T0 + dt * kk;
      const double ss = p.s(tt);
      for (int i = 0; i < n; ++i) {
        if (z(i, kk) == 0.0) {  // z = u e^{-M alpha} vanishes at the window ends
          dst[i] = 0.0;
          continue;
        }
        const double ma = p.M * beta[i] / ss;
        require(ma < 700.0, Errc::numerical,
                "weight too steep for linear-scale P123 evaluation");
        dst[i] = z(i, kk) * std::exp(ma);
      }
    };
    u_at(k, uk);
    u_at(k - 1, ukm);
    u_at(k + 1, ukp);
    const Vec ut = (ukp - ukm) / (2.0 * dt);
    const Vec Pu = ut + op.A * uk;
    for (int i = 0; i < n; ++i) {
      const double ma = p.M * beta[i] / s;
      const double ref = Pu[i] * std::exp(-ma);
      const double diff = out.P1(i, k) + out.P2(i, k) + out.P3(i, k) - ref;
      res2 += wq * dt * diff * diff;
    }
  }
  out.residual = std::sqrt(res2);
  return out;
}

}  // namespace grushin
