#include "core/inverse.hpp"

#include <algorithm>

namespace grushin {

SourceSpec make_source_spec(const TensorGrid& grid,
                            const std::function<double(double, const std::vector<double>&)>& R,
                            double T0, double T1, int steps) {
  require(T1 > 0.0 && T0 >= 0.0 && T0 < T1, Errc::invalid_argument, "invalid window");
  require(steps >= 4, Errc::invalid_argument, "too few time steps");
  SourceSpec spec;
  spec.T0 = T0;
  spec.T1 = T1;
  spec.steps = steps;
  spec.dt = T1 / steps;
  const double k0f = T0 / spec.dt;
  require(std::abs(k0f - std::llround(k0f)) < 1e-9, Errc::invalid_argument,
          "T0 must fall on a time node");
  InteriorMapX map = interior_map_x(grid);
  const int nix = map.size();
  spec.R.resize(nix, steps + 1);
  for (int k = 0; k <= steps; ++k) {
    const double t = spec.dt * k;
    for (int i = 0; i < nix; ++i) spec.R(i, k) = R(t, grid.x_coords(map.nodes[i]));
  }
  spec.dtR.resize(nix, steps + 1);
  for (int k = 0; k <= steps; ++k) {
    if (k == 0) spec.dtR.col(k) = (spec.R.col(1) - spec.R.col(0)) / spec.dt;
    else if (k == steps) spec.dtR.col(k) = (spec.R.col(k) - spec.R.col(k - 1)) / spec.dt;
    else spec.dtR.col(k) = (spec.R.col(k + 1) - spec.R.col(k - 1)) / (2.0 * spec.dt);
  }
  spec.R0 = spec.R.col(steps).minCoeff();
  const int k0 = static_cast<int>(std::llround(k0f));
  double acc = 0.0;
  for (int k = k0; k <= steps; ++k) {
    const double tw = (k == k0 || k == steps) ? 0.5 * spec.dt : spec.dt;
    const double sup = spec.dtR.col(k).cwiseAbs().maxCoeff();
    acc += tw * sup * sup;
  }
  spec.V = std::sqrt(acc);
  return spec;
}

SourceValidation validate_source_spec(const SourceSpec& spec, double eta) {
  require(spec.R.allFinite() && spec.dtR.allFinite(), Errc::invalid_argument,
          "R and dtR must be finite");
  require(spec.R0 > 0.0, Errc::verification,
          "hypothesis violated: R(T1, .) is not bounded below by a positive R0");
  SourceValidation v;
  v.R0 = spec.R0;
  v.V = spec.V;
  v.smallness_ok = (spec.V / spec.R0) < eta;
  return v;
}

ForwardMap::ForwardMap(const TensorGrid& grid, const ModeBasis& basis, double gamma,
                       const CoefficientB& b, const Box& omega, SourceSpec spec,
                       std::vector<int> mode_ids, Scheme scheme)
    : grid_(&grid), basis_(&basis), spec_(std::move(spec)), scheme_(scheme),
      mode_ids_(std::move(mode_ids)) {
  require(!mode_ids_.empty(), Errc::invalid_argument, "empty mode selection");
  n_modes_ = static_cast<int>(mode_ids_.size());
  for (int id : mode_ids_)
    require(id >= 0 && id < basis.count, Errc::invalid_argument, "mode id out of range");
  ops_.reserve(mode_ids_.size());
  for (int id : mode_ids_)
    ops_.push_back(assemble_mode_operator(grid, basis.mu[id], gamma, b));
  for (const auto& op : ops_)
    steppers_.push_back(std::make_unique<ImplicitStepper>(op.A, spec_.dt, scheme));
  nix_ = ops_[0].size();
  wx_ = ops_[0].quad_weight();
  wy_ = grid.grid_y.h;
  require(spec_.R.rows() == nix_, Errc::invalid_argument,
          "source spec sampled on a different grid");

  require(static_cast<int>(omega.intervals.size()) == grid.dim_x() + 1,
          Errc::invalid_argument, "omega must be a full box (x axes then y)");
  Box bx;
  bx.intervals.assign(omega.intervals.begin(), omega.intervals.end() - 1);
  IndexSet omega_x = subdomain_indices_x(grid, bx);
  for (int k = 0; k < nix_; ++k)
    if (omega_x.contains(ops_[0].map.nodes[k])) omega_rows_.push_back(k);
  const auto& [ylo, yhi] = omega.intervals.back();
  omega2_ = subdomain_indices_1d(grid.grid_y, ylo, yhi);
  phi_omega2_.resize(omega2_.size(), n_modes_);
  for (int j = 0; j < omega2_.size(); ++j)
    for (int n = 0; n < n_modes_; ++n)
      phi_omega2_(j, n) = basis.phi(omega2_.indices[j], mode_ids_[n]);
  k0_ = static_cast<int>(std::llround(spec_.T0 / spec_.dt));
}

void ForwardMap::forward_states(const Vec& f, const Vec* u0, Mat& states) const {
  const int K = spec_.steps;
  states.setZero(f_dim(), K + 1);
  if (u0) states.col(0) = *u0;
  Vec u(nix_), gk(nix_), gk1(nix_);
  for (int n = 0; n < n_modes_; ++n) {
    u = states.col(0).segment(n * nix_, nix_);
    const Vec fn = mode_block(f, n);
    gk = spec_.R.col(0).cwiseProduct(fn);
    for (int k = 0; k < K; ++k) {
      gk1 = spec_.R.col(k + 1).cwiseProduct(fn);
      steppers_[n]->step(u, &gk, &gk1);
      states.col(k + 1).segment(n * nix_, nix_) = u;
      gk.swap(gk1);
    }
  }
}

Measurement ForwardMap::apply(const Vec& f, const Vec* u0) const {
  require(f.size() == f_dim(), Errc::invalid_argument, "f size mismatch");
  Mat states;
  forward_states(f, u0, states);
  const int K = spec_.steps;
  const int nw = K - k0_ + 1;
  const int nr = static_cast<int>(omega_rows_.size());
  const int n2 = omega2_.size();
  Measurement m;
  m.window_k0 = k0_;
  m.dt = spec_.dt;
  m.dtu.resize(nw, nr * n2);
  Mat vrows(nr, n_modes_);
  for (int k = k0_; k <= K; ++k) {
    // v = -A u + R f per mode, restricted to the omega x rows
    for (int n = 0; n < n_modes_; ++n) {
      const Vec un = states.col(k).segment(n * nix_, nix_);
      const Vec vn = -(ops_[n].A * un) + spec_.R.col(k).cwiseProduct(mode_block(f, n));
      for (int r = 0; r < nr; ++r) vrows(r, n) = vn[omega_rows_[r]];
    }
    Mat samples = vrows * phi_omega2_.transpose();  // nr x n2
    for (int r = 0; r < nr; ++r)
      for (int j = 0; j < n2; ++j) m.dtu(k - k0_, r * n2 + j) = samples(r, j);
  }
  m.g_uT1.resize(f_dim());
  for (int n = 0; n < n_modes_; ++n)
    m.g_uT1.segment(n * nix_, nix_) = ops_[n].A * states.col(K).segment(n * nix_, nix_);
  return m;
}

Vec ForwardMap::dtu_at_T1(const Vec& f, const Vec* u0) const {
  Mat states;
  forward_states(f, u0, states);
  Vec v(f_dim());
  for (int n = 0; n < n_modes_; ++n) {
    const Vec un = states.col(spec_.steps).segment(n * nix_, nix_);
    v.segment(n * nix_, nix_) =
        -(ops_[n].A * un) + spec_.R.col(spec_.steps).cwiseProduct(mode_block(f, n));
  }
  return v;
}

Vec ForwardMap::apply_adjoint(const Measurement& m, Vec* u0_adjoint) const {
  const int K = spec_.steps;
  const int nr = static_cast<int>(omega_rows_.size());
  const int n2 = omega2_.size();
  require(m.dtu.rows() == K - k0_ + 1 && m.dtu.cols() == nr * n2, Errc::invalid_argument,
          "measurement layout mismatch");
  auto tw = [&](int k) { return (k == k0_ || k == K) ? 0.5 * spec_.dt : spec_.dt; };
  // cotangents on u(t_k) (only -A c enters) and direct R terms on f
  Vec fstar = Vec::Zero(f_dim());
  Mat cot_u = Mat::Zero(f_dim(), K + 1);  // dense in k; window columns only
  Mat mrow(nr, n2);
  for (int k = k0_; k <= K; ++k) {
    for (int r = 0; r < nr; ++r)
      for (int j = 0; j < n2; ++j) mrow(r, j) = m.dtu(k - k0_, r * n2 + j);
    Mat c = (tw(k) * wy_) * (mrow * phi_omega2_);  // nr x n_modes
    for (int n = 0; n < n_modes_; ++n) {
      Vec cn = Vec::Zero(nix_);
      for (int r = 0; r < nr; ++r) cn[omega_rows_[r]] = c(r, n);
      fstar.segment(n * nix_, nix_) += spec_.R.col(k).cwiseProduct(cn);
      cot_u.col(k).segment(n * nix_, nix_) -= ops_[n].A * cn;
    }
  }
  // G u(T1) part
  for (int n = 0; n < n_modes_; ++n)
    cot_u.col(K).segment(n * nix_, nix_) += ops_[n].A * m.g_uT1.segment(n * nix_, nix_);
  // reverse sweep through the stepping scheme
  if (u0_adjoint) u0_adjoint->setZero(f_dim());
  for (int n = 0; n < n_modes_; ++n) {
    Vec p = Vec::Zero(nix_);
    Vec acc = Vec::Zero(nix_);
    for (int k = K; k >= 1; --k) {
      p += cot_u.col(k).segment(n * nix_, nix_);
      const Vec phi = steppers_[n]->solve_shifted(p);
      if (scheme_ == Scheme::backward_euler) {
        acc += spec_.dt * spec_.R.col(k).cwiseProduct(phi);
        p = phi;
      } else {
        acc += (0.5 * spec_.dt) *
               (spec_.R.col(k - 1) + spec_.R.col(k)).cwiseProduct(phi);
        p = steppers_[n]->apply_explicit(phi);
      }
    }
    fstar.segment(n * nix_, nix_) += acc;
    if (u0_adjoint) {
      // u_k depends on u0 through the propagator alone; p now carries its
      // cotangent, plus the direct window term at k = 0
      Vec p0 = p + cot_u.col(0).segment(n * nix_, nix_);
      u0_adjoint->segment(n * nix_, nix_) = p0;
    }
  }
  return fstar;
}

Vec ForwardMap::apply_normal(const Vec& f, double lambda_reg) const {
  Measurement m = apply(f);
  return apply_adjoint(m) + lambda_reg * f;
}

double ForwardMap::y1_norm_sq(const Measurement& m) const {
  const int K = spec_.steps;
  auto tw = [&](int k) { return (k == k0_ || k == K) ? 0.5 * spec_.dt : spec_.dt; };
  double acc = 0.0;
  for (int k = k0_; k <= K; ++k)
    acc += tw(k) * wx_ * wy_ * m.dtu.row(k - k0_).squaredNorm();
  return acc;
}

double ForwardMap::y2_norm_sq(const Measurement& m) const {
  return wx_ * m.g_uT1.squaredNorm();
}

double ForwardMap::measurement_norm_sq(const Measurement& m) const {
  return y1_norm_sq(m) + y2_norm_sq(m);
}

Measurement ForwardMap::measurement_diff(const Measurement& a, const Measurement& b) const {
  require(a.dtu.rows() == b.dtu.rows() && a.dtu.cols() == b.dtu.cols(),
          Errc::invalid_argument, "measurement layout mismatch");
  Measurement d = a;
  d.dtu -= b.dtu;
  d.g_uT1 -= b.g_uT1;
  return d;
}

void ForwardMap::add_noise(Measurement& m, double level, std::uint64_t seed) const {
  if (level <= 0.0) return;
  Rng rng(seed);
  const double rms1 = std::sqrt(m.dtu.squaredNorm() / std::max<int>(1, m.dtu.size()));
  for (Eigen::Index i = 0; i < m.dtu.rows(); ++i)
    for (Eigen::Index j = 0; j < m.dtu.cols(); ++j)
      m.dtu(i, j) += level * rms1 * rng.normal();
  const double rms2 = std::sqrt(m.g_uT1.squaredNorm() / std::max<int>(1, (int)m.g_uT1.size()));
  for (Eigen::Index i = 0; i < m.g_uT1.size(); ++i) m.g_uT1[i] += level * rms2 * rng.normal();
  m.noise_level = level;
}

Vec ForwardMap::sample_f(
    const std::function<double(const std::vector<double>&, double)>& f) const {
  Vec out(f_dim());
  Vec row(grid_->ny());
  for (int i = 0; i < nix_; ++i) {
    const auto xc = grid_->x_coords(ops_[0].map.nodes[i]);
    for (int j = 0; j < grid_->ny(); ++j) row[j] = f(xc, grid_->grid_y.nodes[j]);
    const Vec c = basis_->analyze_row(row);
    for (int n = 0; n < n_modes_; ++n) out[n * nix_ + i] = c[mode_ids_[n]];
  }
  return out;
}

Vec ForwardMap::f_to_field(const Vec& f) const {
  Vec field = Vec::Zero(grid_->total());
  for (int i = 0; i < nix_; ++i) {
    const int ix = ops_[0].map.nodes[i];
    for (int j = 1; j + 1 < grid_->ny(); ++j) {
      double acc = 0.0;
      for (int n = 0; n < n_modes_; ++n)
        acc += f[n * nix_ + i] * basis_->phi(j, mode_ids_[n]);
      field[grid_->flat(ix, j)] = acc;
    }
  }
  return field;
}

ReconstructionResult reconstruct_source(const ForwardMap& map, const Measurement& data,
                                        double lambda_reg, const Vec* u0, double cg_tol,
                                        int cg_maxit) {
  require(lambda_reg >= 0.0, Errc::invalid_argument, "lambda_reg must be nonnegative");
  Measurement effective = data;
  if (u0) {
    Vec zero_f = Vec::Zero(map.f_dim());
    Measurement background = map.apply(zero_f, u0);
    effective = map.measurement_diff(data, background);
  }
  Vec rhs = map.apply_adjoint(effective);
  Vec f = Vec::Zero(map.f_dim());
  auto applyN = [&](const Vec& x, Vec& y) { y = map.apply_normal(x, lambda_reg); };
  CgResult cg = conjugate_gradient(applyN, rhs, f, cg_tol, cg_maxit);
  if (!cg.converged && cg.residual > 1e-6)
    fail(Errc::numerical, "reconstruction CG stagnated at relative residual " +
                              std::to_string(cg.residual));
  ReconstructionResult res;
  res.f_hat = f;
  res.lambda_reg = lambda_reg;
  res.cg_iterations = cg.iterations;
  res.cg_residual = cg.residual;
  const double mnorm = map.measurement_norm_sq(effective);
  res.lipschitz_ratio = mnorm > 0.0 ? map.f_norm_sq(f) / mnorm : 0.0;
  return res;
}

double lipschitz_ratio(const ForwardMap& map, const Vec& f, const Measurement& m) {
  const double denom = map.measurement_norm_sq(m);
  const double num = map.f_norm_sq(f);
  if (denom == 0.0) {
    require(num == 0.0, Errc::verification,
            "stability violation: zero measurement with a nonzero source");
    return 0.0;
  }
  return num / denom;
}

Stab1Report stab1_check(const ForwardMap& map, const Vec& f, const Vec* u0) {
  Stab1Report rep;
  rep.lhs = map.f_norm_sq(f);
  Measurement m = map.apply(f, u0);
  const Vec vT1 = map.dtu_at_T1(f, u0);
  const double R0 = map.spec().R0;
  require(R0 > 0.0, Errc::verification, "R0 must be positive for the stability chain");
  rep.rhs = (2.0 / (R0 * R0)) * (map.wx() * vT1.squaredNorm() + map.y2_norm_sq(m));
  rep.margin = rep.rhs - rep.lhs;
  return rep;
}

double max_lipschitz_ratio(const ForwardMap& map, double tol, int max_outer,
                           std::uint64_t seed) {
  // smallest eigenvalue of N0 = F*F by inverse power iteration; each solve of
  // N0 runs CG best-effort, which can only make the Rayleigh value (an upper
  // bound of lambda_min) larger, so the returned ratio stays a lower bound
  Rng rng(seed);
  Vec v = rng.normal_vector(map.f_dim());
  v.normalize();
  Vec z = v;
  auto applyN = [&](const Vec& x, Vec& y) { y = map.apply_normal(x, 0.0); };
  double rayleigh = 0.0, prev = -1.0;
  Vec Nv(map.f_dim());
  for (int it = 0; it < max_outer; ++it) {
    applyN(v, Nv);
    rayleigh = v.dot(Nv);
    if (prev > 0.0 && std::abs(rayleigh - prev) <= tol * rayleigh) break;
    prev = rayleigh;
    conjugate_gradient(applyN, v, z, 1e-8, 400);
    const double zn = z.norm();
    if (!(zn > 0.0)) break;
    v = z / zn;
  }
  return 1.0 / rayleigh;
}

double max_joint_lipschitz_ratio(const ForwardMap& map, double /*tol*/, int /*max_outer*/,
                                 std::uint64_t /*seed*/) {
  // Dense whitened solve of the joint pencil (||f||^2 form, normal operator
  // of (f, u0) -> measurement): iterative pencil solvers go blind on the
  // weakly-observable directions that carry the supremum. Per-mode systems
  // are small, so the normal matrix is assembled column by column through the
  // matrix-free sweeps.
  const int nf = map.f_dim();
  const int n = 2 * nf;
  require(n <= 1200, Errc::invalid_argument,
          "joint ratio probe is meant for per-mode systems");
  Mat B(n, n);
  Vec e = Vec::Zero(n), col(n), u0_adj(nf);
  for (int i = 0; i < n; ++i) {
    e[i] = 1.0;
    const Vec f = e.head(nf);
    const Vec u0 = e.tail(nf);
    Measurement m = map.apply(f, &u0);
    col.head(nf) = map.apply_adjoint(m, &u0_adj);
    col.tail(nf) = u0_adj;
    B.col(i) = col;
    e[i] = 0.0;
  }
  B = 0.5 * (B + B.transpose().eval());
  Eigen::SelfAdjointEigenSolver<Mat> esB(B);
  require(esB.info() == Eigen::Success, Errc::numerical, "joint normal eigensolve failed");
  const double bmax = esB.eigenvalues()(n - 1);
  require(bmax > 0.0, Errc::numerical, "joint normal operator vanished");
  std::vector<int> kept;
  for (int i = 0; i < n; ++i)
    if (esB.eigenvalues()(i) >= 1e-14 * bmax) kept.push_back(i);
  Mat Y(n, kept.size());
  for (std::size_t c = 0; c < kept.size(); ++c)
    Y.col(c) = esB.eigenvectors().col(kept[c]) / std::sqrt(esB.eigenvalues()(kept[c]));
  // numerator form: projection onto the f block
  Mat Nw = Y.topRows(nf).transpose() * Y.topRows(nf);
  Eigen::SelfAdjointEigenSolver<Mat> esN(Nw);
  require(esN.info() == Eigen::Success, Errc::numerical, "whitened ratio eigensolve failed");
  return esN.eigenvalues()(kept.size() - 1);
}

std::vector<ModeRatioRow> uniform_mode_ratio_study(
    const TensorGrid& grid, const ModeBasis& basis, double gamma, const CoefficientB& b,
    const IndexSet& omega1_x, const SourceSpec& spec, int n_lo, int n_hi, int trials,
    std::uint64_t seed, unsigned workers) {
  require(n_lo >= 1 && n_hi >= n_lo && n_hi <= basis.count, Errc::invalid_argument,
          "mode range out of basis bounds");
  Box omega;
  for (int d = 0; d < grid.dim_x(); ++d) omega.intervals.push_back(omega1_x.box.intervals[d]);
  omega.intervals.push_back({grid.grid_y.a, grid.grid_y.b});  // strip: full y extent
  std::vector<ModeRatioRow> rows(n_hi - n_lo + 1);
  parallel_for(rows.size(), [&](std::size_t idx) {
    const int n = n_lo + static_cast<int>(idx);
    ForwardMap map(grid, basis, gamma, b, omega, spec, {n - 1});
    // quantified over unknown initial data, as in the stability theorems
    double worst = max_joint_lipschitz_ratio(map, 1e-4, std::max(trials, 20), seed + n);
    rows[idx] = {n, basis.mu[n - 1], worst};
  }, workers);
  return rows;
}

}  // namespace grushin
