#include "core/experiment.hpp"

#include "core/carleman.hpp"
#include "core/control.hpp"
#include "core/domain.hpp"
#include "core/evolution.hpp"
#include "core/inverse.hpp"
#include "core/lr_schedule.hpp"
#include "core/observability.hpp"
#include "core/operators.hpp"
#include "core/spectral.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

namespace grushin {

namespace fs = std::filesystem;

const char* kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::spectrum: return "spectrum";
    case ExperimentKind::scaling: return "scaling";
    case ExperimentKind::evolve: return "evolve";
    case ExperimentKind::carleman_verify: return "carleman-verify";
    case ExperimentKind::lr_schedule: return "lr-schedule";
    case ExperimentKind::observability: return "observability";
    case ExperimentKind::invert: return "invert";
    case ExperimentKind::control: return "control";
    case ExperimentKind::full_suite: return "full-suite";
  }
  return "unknown";
}

ExperimentKind kind_from_name(const std::string& name) {
  for (int k = 0; k <= static_cast<int>(ExperimentKind::full_suite); ++k)
    if (name == kind_name(static_cast<ExperimentKind>(k)))
      return static_cast<ExperimentKind>(k);
  fail(Errc::config, "unknown experiment kind: " + name);
}

namespace {

Json base_defaults() {
  Json j;
  j["kind"] = "spectrum";
  j["domain"] = {{"x", Json::array({{{"a", -1.0}, {"b", 1.0}, {"n", 201}}})},
                 {"y", {{"a", 0.0}, {"b", 1.0}, {"n", 101}}}};
  j["gamma"] = 0.5;
  j["b"] = {{"type", "constant"}, {"value", 1.0}};
  j["n_modes"] = 12;
  j["omega"] = {{"x", Json::array({Json::array({0.5, 0.8})})},
                {"y", Json::array({0.2, 0.8})}};
  j["omega1_tilde"] = {{"x", Json::array({Json::array({0.55, 0.75})})}};
  j["T"] = 1.0;
  j["T0"] = 0.25;
  j["steps"] = 400;
  j["seed"] = 1234;
  j["workers"] = 0;
  j["spectrum"] = {{"count", 12}};
  j["scaling"] = {{"mu_min", 1e2},       {"mu_max", 1e6}, {"points", 9},
                  {"gammas", Json::array({0.25, 0.5, 1.0})}, {"n_x", 2001}};
  j["evolve"] = {{"scheme", "crank-nicolson"}, {"target", "mode"}, {"mode_n", 1},
                 {"u0", "ground"},             {"output", "csv"}};
  j["carleman"] = {{"a", 2.0},
                   {"mode", "search"},
                   {"C1_cal", defaults::kCarlemanC1HighGamma},
                   {"C2_cal", defaults::kCarlemanC2},
                   {"samples", 50},
                   {"mu_lo", 10.0},
                   {"mu_hi", 1e4},
                   {"window_T", 1.0},
                   {"window_steps", 250}};
  j["lr"] = {{"rho_fraction", 0.75},
             {"rho", nullptr},
             {"T", defaults::kLrDefaultT},
             {"depth", defaults::kLrDefaultDepth},
             {"N", defaults::kLrDefaultDepth},
             {"C1", defaults::kRecursionC1},
             {"C2", defaults::kRecursionC2},
             {"C3", defaults::kRecursionC3},
             {"c_star", defaults::kCStarGamma05}};
  j["observability"] = {{"n_lo", 1}, {"n_hi", 16},          {"steps", 300},
                        {"T_lo", 0.05}, {"T_hi", 2.0},      {"bracket", 0.2},
                        {"mt_n_lo", 2}, {"mt_n_hi", 10}};
  j["invert"] = {{"lambda_reg", 1e-10}, {"noise", 0.0},  {"R", "constant"},
                 {"f", "smooth"},       {"cg_tol", 1e-12}, {"cg_maxit", 800},
                 {"measurement_dtu", ""}, {"measurement_gu", ""}};
  j["control"] = {{"blocks", 5}, {"eps0", 1e-3}, {"layout", "active-first"},
                  {"steps", 1000}};
  return j;
}

void merge_into(Json& base, const Json& user, const std::string& path) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key()))
      fail(Errc::config, "unknown config key: " + key_path);
    if (base[it.key()].is_object() && it.value().is_object())
      merge_into(base[it.key()], it.value(), key_path);
    else
      base[it.key()] = it.value();
  }
}

double jnum(const Json& j, const char* key) { return j.at(key).get<double>(); }
int jint(const Json& j, const char* key) { return j.at(key).get<int>(); }

Grid1D grid_from(const Json& axis) {
  return build_interval_grid(jnum(axis, "a"), jnum(axis, "b"), jint(axis, "n"));
}

TensorGrid grid_from_config(const Json& tree) {
  std::vector<Grid1D> gx;
  for (const auto& axis : tree.at("domain").at("x")) gx.push_back(grid_from(axis));
  return build_tensor_grid(gx, grid_from(tree.at("domain").at("y")));
}

Box omega_box_from(const Json& omega, int dim_x, bool with_y) {
  Box box;
  const auto& xs = omega.at("x");
  require(static_cast<int>(xs.size()) == dim_x, Errc::config,
          "omega x-intervals must match the domain dimension");
  for (const auto& iv : xs) box.intervals.push_back({iv.at(0), iv.at(1)});
  if (with_y) {
    const auto& yv = omega.at("y");
    box.intervals.push_back({yv.at(0), yv.at(1)});
  }
  return box;
}

CoefficientB b_from_config(const TensorGrid& grid, const Json& tree) {
  const auto& bj = tree.at("b");
  const std::string type = bj.at("type");
  if (type == "constant") return constant_b(grid, bj.at("value").get<double>());
  if (type == "samples") {
    Vec v(grid.nx());
    const auto& vals = bj.at("value");
    require(static_cast<int>(vals.size()) == grid.nx(), Errc::config,
            "b samples must match the x node count");
    for (int i = 0; i < grid.nx(); ++i) v[i] = vals.at(i).get<double>();
    return sampled_b(grid, v);
  }
  fail(Errc::config, "b.type must be constant or samples");
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex16(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& json_text) {
  Json user;
  try {
    user = Json::parse(json_text);
  } catch (const std::exception& e) {
    fail(Errc::config, std::string("config parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  cfg.tree = base_defaults();
  merge_into(cfg.tree, user, "");
  cfg.kind = kind_from_name(cfg.tree.at("kind").get<std::string>());
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void ExperimentConfig::set_override(const std::string& dotted_key, const std::string& value) {
  Json* node = &tree;
  std::size_t pos = 0;
  std::string key = dotted_key;
  while ((pos = key.find('.')) != std::string::npos) {
    const std::string head = key.substr(0, pos);
    require(node->contains(head), Errc::config, "unknown config key: " + dotted_key);
    node = &(*node)[head];
    key = key.substr(pos + 1);
  }
  require(node->contains(key), Errc::config, "unknown config key: " + dotted_key);
  Json parsed;
  try {
    parsed = Json::parse(value);
  } catch (...) {
    parsed = value;  // bare strings allowed
  }
  (*node)[key] = parsed;
  kind = kind_from_name(tree.at("kind").get<std::string>());
  validate();
}

void ExperimentConfig::validate() {
  const double gamma = tree.at("gamma").get<double>();
  require(gamma > 0.0 && gamma <= 1.0, Errc::config, "gamma must lie in (0, 1]");
  TensorGrid grid = grid_from_config(tree);
  // boxes must intersect the interior; subdomain construction enforces it
  try {
    Box omega = omega_box_from(tree.at("omega"), grid.dim_x(), true);
    subdomain_indices(grid, omega);
    Box tilde = omega_box_from(tree.at("omega1_tilde"), grid.dim_x(), false);
    subdomain_indices_x(grid, tilde);
  } catch (const Error& e) {
    fail(Errc::config, std::string("invalid omega boxes: ") + e.what());
  }
  const double T = tree.at("T").get<double>();
  const double T0 = tree.at("T0").get<double>();
  require(T > 0.0 && T0 >= 0.0 && T0 < T, Errc::config, "need 0 <= T0 < T");
  require(tree.at("steps").get<int>() >= 4, Errc::config, "steps must be >= 4");
  require(tree.at("n_modes").get<int>() >= 1, Errc::config, "n_modes must be >= 1");
  b_from_config(grid, tree);
}

std::string ExperimentConfig::echo() const { return tree.dump(2) + "\n"; }

std::string ExperimentConfig::content_hash() const { return hex16(fnv1a(echo())); }

std::string default_config_text(ExperimentKind kind) {
  Json j = base_defaults();
  j["kind"] = kind_name(kind);
  return j.dump(2) + "\n";
}

// ---- artifact writers ----

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::binary);  // binary: LF line endings everywhere
  require(out.good(), Errc::io, "cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i)
    out << header[i] << (i + 1 < header.size() ? "," : "");
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << fmt_double(row[i]) << (i + 1 < row.size() ? "," : "");
    out << "\n";
  }
}

void write_binary_block(const fs::path& path, const Mat& data, double t0, double dt) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io, "cannot write " + path.string());
  const char magic[6] = {'G', 'R', 'N', 'T', 'R', 'J'};
  const unsigned char version = 1, pad = 0;
  out.write(magic, 6);
  out.write(reinterpret_cast<const char*>(&version), 1);
  out.write(reinterpret_cast<const char*>(&pad), 1);
  const std::uint64_t rows = data.rows(), cols = data.cols();
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(&cols), 8);
  out.write(reinterpret_cast<const char*>(&t0), 8);
  out.write(reinterpret_cast<const char*>(&dt), 8);
  for (std::uint64_t r = 0; r < rows; ++r)
    for (std::uint64_t c = 0; c < cols; ++c) {
      const double v = data(r, c);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
}

Mat read_binary_block(const fs::path& path, double* t0, double* dt) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io, "cannot read " + path.string());
  char magic[6];
  unsigned char version, pad;
  in.read(magic, 6);
  require(std::string(magic, 6) == "GRNTRJ", Errc::io, "bad magic in " + path.string());
  in.read(reinterpret_cast<char*>(&version), 1);
  in.read(reinterpret_cast<char*>(&pad), 1);
  require(version == 1, Errc::io, "unsupported block version");
  std::uint64_t rows, cols;
  double ft0, fdt;
  in.read(reinterpret_cast<char*>(&rows), 8);
  in.read(reinterpret_cast<char*>(&cols), 8);
  in.read(reinterpret_cast<char*>(&ft0), 8);
  in.read(reinterpret_cast<char*>(&fdt), 8);
  Mat data(rows, cols);
  for (std::uint64_t r = 0; r < rows; ++r)
    for (std::uint64_t c = 0; c < cols; ++c) {
      double v;
      in.read(reinterpret_cast<char*>(&v), 8);
      data(r, c) = v;
    }
  require(in.good(), Errc::io, "truncated block " + path.string());
  if (t0) *t0 = ft0;
  if (dt) *dt = fdt;
  return data;
}

void write_json_file(const fs::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// ---- runners ----

namespace {

struct RunContext {
  const ExperimentConfig* cfg;
  fs::path dir;
  Json summary;
  int exit_code = 0;
};

int block_j_min(double mu) {
  int j = 1;
  while (std::pow(2.0, 2 * j) < mu) ++j;
  return j;
}

void run_spectrum(RunContext& ctx) {
  const Json& tree = ctx.cfg->tree;
  TensorGrid grid = grid_from_config(tree);
  const int count = jint(tree.at("spectrum"), "count");
  ModeBasis basis = dirichlet_eigenpairs(grid.grid_y, count);
  std::vector<std::vector<double>> rows;
  for (int n = 0; n < basis.count; ++n)
    rows.push_back({double(n + 1), basis.mu[n], double(block_j_min(basis.mu[n]))});
  write_csv(ctx.dir / "spectrum.csv", {"n", "mu_n", "block_j_min"}, rows);
  ctx.summary["count"] = basis.count;
  ctx.summary["mu_min"] = basis.mu[0];
  ctx.summary["mu_max"] = basis.mu[basis.count - 1];
  ctx.summary["orthonormality_defect"] = basis.orthonormality_defect;
}

void run_scaling(RunContext& ctx) {
  const Json& sc = ctx.cfg->tree.at("scaling");
  const double mu_min = jnum(sc, "mu_min"), mu_max = jnum(sc, "mu_max");
  const int points = jint(sc, "points");
  const int n_x = jint(sc, "n_x");
  std::vector<Grid1D> gx = {build_interval_grid(-1.0, 1.0, n_x)};
  TensorGrid grid = build_tensor_grid(gx, build_interval_grid(0.0, 1.0, 3));
  CoefficientB b = constant_b(grid, 1.0);
  Json fits = Json::object();
  for (const auto& gj : sc.at("gammas")) {
    const double gamma = gj.get<double>();
    std::vector<std::pair<double, double>> pairs(points);
    const Vec* warm = nullptr;
    Vec prev;
    for (int i = 0; i < points; ++i) {
      const double mu = mu_min * std::pow(mu_max / mu_min, double(i) / (points - 1));
      ModeOperator op = assemble_mode_operator(grid, mu, gamma, b);
      EigenResult er = smallest_eigenvalue(op, 1e-10, 600, warm);
      pairs[i] = {mu, er.lambda};
      prev = er.vector;
      warm = &prev;
    }
    ScalingFit fit = fit_scaling_law(pairs, gamma);
    std::vector<std::vector<double>> rows;
    for (const auto& [mu, lam] : pairs)
      rows.push_back({mu, lam, lam * std::pow(mu, -1.0 / (1.0 + gamma))});
    std::ostringstream name;
    name << "scaling_gamma" << gamma << ".csv";
    write_csv(ctx.dir / name.str(), {"mu", "lambda", "lambda_mu_ratio"}, rows);
    Json f;
    f["exponent"] = fit.exponent;
    f["c_star"] = fit.c_star;
    f["c_star_upper"] = fit.c_star_upper;
    f["expected_exponent"] = 1.0 / (1.0 + gamma);
    fits[std::to_string(gamma)] = f;
  }
  ctx.summary["fits"] = fits;
}

void run_evolve(RunContext& ctx) {
  const Json& tree = ctx.cfg->tree;
  const Json& ev = tree.at("evolve");
  TensorGrid grid = grid_from_config(tree);
  CoefficientB b = b_from_config(grid, tree);
  const double gamma = jnum(tree, "gamma");
  const double T = jnum(tree, "T");
  const int steps = jint(tree, "steps");
  const double dt = T / steps;
  const Scheme scheme = ev.at("scheme") == "backward-euler" ? Scheme::backward_euler
                                                            : Scheme::crank_nicolson;
  Trajectory traj;
  if (ev.at("target") == "mode") {
    ModeBasis basis = dirichlet_eigenpairs(grid.grid_y, jint(tree, "n_modes"));
    const int n = jint(ev, "mode_n");
    ModeOperator op = assemble_mode_operator(grid, basis.mu[n - 1], gamma, b);
    Vec u0;
    if (ev.at("u0") == "ground") u0 = smallest_eigenvalue(op, 1e-8).vector;
    else u0 = Rng(tree.at("seed").get<std::uint64_t>()).normal_vector(op.size());
    traj = solve_mode(op, u0, nullptr, T, dt, scheme);
  } else {
    FullOperator op = assemble_full_operator(grid, gamma, b);
    Rng rng(tree.at("seed").get<std::uint64_t>());
    Vec u0 = rng.normal_vector(op.size());
    traj = solve_full(op, u0, nullptr, T, dt, scheme);
  }
  if (ev.at("output") == "binary") {
    write_binary_block(ctx.dir / "trajectory.bin", traj.states.transpose(), traj.t0, traj.dt);
  } else {
    std::vector<std::string> header = {"t"};
    for (int i = 0; i < traj.dim(); ++i) header.push_back("u" + std::to_string(i));
    std::vector<std::vector<double>> rows;
    for (int k = 0; k <= traj.steps; ++k) {
      std::vector<double> row = {traj.time(k)};
      for (int i = 0; i < traj.dim(); ++i) row.push_back(traj.states(i, k));
      rows.push_back(std::move(row));
    }
    write_csv(ctx.dir / "trajectory.csv", header, rows);
  }
  ctx.summary["norm0"] = traj.states.col(0).norm();
  ctx.summary["normT"] = traj.states.col(traj.steps).norm();
  ctx.summary["scheme"] = scheme_name(traj.scheme);
}

void run_carleman(RunContext& ctx) {
  const Json& tree = ctx.cfg->tree;
  const Json& ca = tree.at("carleman");
  TensorGrid grid = grid_from_config(tree);
  CoefficientB b = b_from_config(grid, tree);
  const double gamma = jnum(tree, "gamma");
  Box tilde = omega_box_from(tree.at("omega1_tilde"), grid.dim_x(), false);
  PsiFunction psi = construct_psi(grid, tilde);
  CarlemanWeight w_search = calibrate_weight(psi, jnum(ca, "a"), WeightMode::search);
  CarlemanWeight w_paper = calibrate_weight(psi, jnum(ca, "a"), WeightMode::paper);
  WeightVerification vs = verify_weight_inequalities(w_search);
  WeightVerification vp = verify_weight_inequalities(w_paper);

  // per-node margin table for the search weight
  std::vector<std::vector<double>> rows;
  for (int ix : psi.outside_nodes()) {
    const auto c = grid.x_coords(ix);
    rows.push_back({double(ix), c[0], c.size() > 1 ? c[1] : 0.0});
  }
  write_csv(ctx.dir / "margin_nodes.csv", {"node", "x0", "x1"}, rows);

  // ratio regression suite on random mode solutions
  Box omega_x_box = omega_box_from(tree.at("omega"), grid.dim_x(), false);
  IndexSet omega1_x = subdomain_indices_x(grid, omega_x_box);
  const int samples = jint(ca, "samples");
  const double C1_cal = jnum(ca, "C1_cal");
  const double C2_cal = jnum(ca, "C2_cal");
  const double winT = jnum(ca, "window_T");
  const int wsteps = jint(ca, "window_steps");
  Rng rng(tree.at("seed").get<std::uint64_t>());
  double ratio_max = 0.0;
  for (int s = 0; s < samples; ++s) {
    const double mu = jnum(ca, "mu_lo") *
                      std::pow(jnum(ca, "mu_hi") / jnum(ca, "mu_lo"), rng.uniform());
    ModeOperator op = assemble_mode_operator(grid, mu, gamma, b);
    Vec u0 = rng.normal_vector(op.size());
    Vec g0 = rng.normal_vector(op.size());
    auto g = [&](double) { return g0; };
    Trajectory traj = solve_mode(op, u0, g, winT, winT / wsteps, Scheme::crank_nicolson);
    Mat Pu(op.size(), wsteps + 1);
    for (int k = 0; k <= wsteps; ++k) Pu.col(k) = g0;
    CarlemanParams params = make_carleman_params(0.0, winT, mu, gamma, C2_cal);
    CarlemanRatioReport rep = carleman_ratio(op, traj, Pu, w_search, params, omega1_x, C1_cal);
    ratio_max = std::max(ratio_max, rep.ratio);
  }
  ctx.summary["lambda_paper"] = w_paper.lambda;
  ctx.summary["lambda_search"] = w_search.lambda;
  ctx.summary["C1"] = w_search.C1;
  ctx.summary["C3"] = w_search.C3;
  ctx.summary["margins_min_log_ratio_ii"] = vs.min_log_ratio_ii;
  ctx.summary["margins_min_log_ratio_iii"] = vs.min_log_ratio_iii;
  ctx.summary["paper_margins_ok"] = vp.all_ok();
  ctx.summary["ratio_max"] = ratio_max;
  if (!vs.all_ok() || !vp.all_ok() || ratio_max > 1.0) ctx.exit_code = 3;
}

void run_lr(RunContext& ctx) {
  const Json& lr = ctx.cfg->tree.at("lr");
  const double gamma = jnum(ctx.cfg->tree, "gamma");
  const double T = jnum(lr, "T");
  const int depth = jint(lr, "depth");
  LRSchedule schedule = lr.at("rho").is_null()
                            ? build_schedule(T, gamma, jnum(lr, "rho_fraction"), depth)
                            : build_schedule_explicit_rho(T, gamma, jnum(lr, "rho"), depth);
  const int N = std::min(jint(lr, "N"), depth);
  RecursionState st = run_recursion(schedule, jnum(lr, "C1"), jnum(lr, "C2"),
                                    jnum(lr, "C3"), jnum(lr, "c_star"), gamma, N);
  std::vector<std::vector<double>> rows;
  for (int n = 1; n <= N; ++n) {
    rows.push_back({double(n), schedule.tau_at(n),
                    n <= schedule.depth ? schedule.alpha[n] : 0.0,
                    lambda_cutoff(n, jnum(lr, "c_star"), gamma), st.delta(n), st.A(n),
                    st.B(n), st.Btilde(n)});
  }
  write_csv(ctx.dir / "lr_schedule.csv",
            {"n", "tau_n", "alpha_n", "lambda_2n", "delta_n", "A_n", "B_n", "Btilde_n"},
            rows);
  ctx.summary["rho"] = schedule.rho;
  ctx.summary["K"] = schedule.K;
  ctx.summary["admissible"] = schedule.admissible;
  ctx.summary["truncation_defect"] = schedule.truncation_defect();
  ctx.summary["regime_reached"] = st.regime_reached;
  ctx.summary["N0_delta2"] = st.N0_delta2;
  ctx.summary["log_Btilde_N"] = st.log_Btilde[N - 1];
  if (st.regime_reached) {
    AssembledConstant C = assemble_constant(st);
    ctx.summary["A_inf_log"] = C.log_A_inf;
    ctx.summary["C_log"] = C.log_C;
    ctx.summary["C"] = C.C;
  }
}

void run_observability(RunContext& ctx) {
  const Json& tree = ctx.cfg->tree;
  const Json& ob = tree.at("observability");
  TensorGrid grid = grid_from_config(tree);
  CoefficientB b = b_from_config(grid, tree);
  const double gamma = jnum(tree, "gamma");
  const double T = jnum(tree, "T");
  ModeBasis basis = dirichlet_eigenpairs(grid.grid_y, std::max(jint(tree, "n_modes"),
                                                               jint(ob, "n_hi")));
  Box omega_x_box = omega_box_from(tree.at("omega"), grid.dim_x(), false);
  IndexSet omega1_x = subdomain_indices_x(grid, omega_x_box);
  const unsigned workers = tree.at("workers").get<unsigned>();
  auto rows = uniformity_study(grid, basis, gamma, b, omega1_x, T, jint(ob, "n_lo"),
                               jint(ob, "n_hi"), jint(ob, "steps"), workers);
  std::vector<std::vector<double>> csv;
  double sup = 0.0;
  for (const auto& r : rows) {
    csv.push_back({double(r.n), r.mu, r.C});
    sup = std::max(sup, r.C);
  }
  write_csv(ctx.dir / "observability.csv", {"n", "mu_n", "C_n"}, csv);
  ctx.summary["sup_C"] = sup;
  ctx.summary["T"] = T;
  if (gamma == 1.0) {
    ThresholdReport th = minimal_time_study(grid, basis, b, omega1_x, jint(ob, "mt_n_lo"),
                                            jint(ob, "mt_n_hi"), jnum(ob, "T_lo"),
                                            jnum(ob, "T_hi"), jnum(ob, "bracket"),
                                            jint(ob, "steps"), workers);
    ctx.summary["T_hat_star"] = th.T_star_hat;
    ctx.summary["T_bracket"] = Json::array({th.T_lo, th.T_hi});
  }
}

void run_invert(RunContext& ctx) {
  const Json& tree = ctx.cfg->tree;
  const Json& iv = tree.at("invert");
  TensorGrid grid = grid_from_config(tree);
  CoefficientB b = b_from_config(grid, tree);
  const double gamma = jnum(tree, "gamma");
  const double T = jnum(tree, "T");
  const double T0 = jnum(tree, "T0");
  const int steps = jint(tree, "steps");
  ModeBasis basis = dirichlet_eigenpairs(grid.grid_y, jint(tree, "n_modes"));
  Box omega = omega_box_from(tree.at("omega"), grid.dim_x(), true);

  const std::string rkind = iv.at("R");
  auto Rfn = [&](double t, const std::vector<double>&) {
    return rkind == "linear-in-t" ? 1.0 + 0.5 * t : 1.0;
  };
  SourceSpec spec = make_source_spec(grid, Rfn, T0, T, steps);
  validate_source_spec(spec, 0.1);
  std::vector<int> ids(jint(tree, "n_modes"));
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  ForwardMap map(grid, basis, gamma, b, omega, spec, ids);

  Measurement data;
  Vec f_true;
  bool have_truth = false;
  if (!iv.at("measurement_dtu").get<std::string>().empty()) {
    data.dtu = read_binary_block(iv.at("measurement_dtu").get<std::string>());
    Mat gu = read_binary_block(iv.at("measurement_gu").get<std::string>());
    require(gu.rows() == 1, Errc::config, "g_uT1 block must have one row");
    data.g_uT1 = gu.row(0).transpose();
    data.window_k0 = static_cast<int>(std::llround(T0 / spec.dt));
    data.dt = spec.dt;
  } else {
    f_true = map.sample_f([&](const std::vector<double>& xc, double y) {
      double v = std::sin(M_PI * y) * std::cos(0.5 * M_PI * xc[0]);
      if (xc.size() > 1) v *= std::cos(0.5 * M_PI * xc[1]);
      return v;
    });
    have_truth = true;
    data = map.apply(f_true);
    map.add_noise(data, jnum(iv, "noise"), tree.at("seed").get<std::uint64_t>() + 7);
    write_binary_block(ctx.dir / "measurement_dtu.bin", data.dtu, T0, spec.dt);
    write_binary_block(ctx.dir / "measurement_gu.bin", data.g_uT1.transpose(), T, 0.0);
  }
  ReconstructionResult rec = reconstruct_source(map, data, jnum(iv, "lambda_reg"), nullptr,
                                                jnum(iv, "cg_tol"), jint(iv, "cg_maxit"));
  // emit f_hat as a grid field
  Vec field = map.f_to_field(rec.f_hat);
  std::vector<std::vector<double>> rows;
  for (int ix = 0; ix < grid.nx(); ++ix) {
    const auto xc = grid.x_coords(ix);
    for (int iy = 0; iy < grid.ny(); ++iy) {
      std::vector<double> row = {xc[0]};
      if (xc.size() > 1) row.push_back(xc[1]);
      row.push_back(grid.grid_y.nodes[iy]);
      row.push_back(field[grid.flat(ix, iy)]);
      rows.push_back(std::move(row));
    }
  }
  std::vector<std::string> header = {"x0"};
  if (grid.dim_x() > 1) header.push_back("x1");
  header.push_back("y");
  header.push_back("f_hat");
  write_csv(ctx.dir / "f_hat.csv", header, rows);
  if (have_truth) {
    const double err = std::sqrt(map.f_norm_sq(rec.f_hat - f_true) / map.f_norm_sq(f_true));
    ctx.summary["rel_error"] = err;
    Stab1Report stab = stab1_check(map, f_true);
    ctx.summary["stab1_margin"] = stab.margin;
    if (stab.margin < 0.0) ctx.exit_code = 3;
  }
  ctx.summary["ratio"] = rec.lipschitz_ratio;
  ctx.summary["iterations"] = rec.cg_iterations;
}

void run_control(RunContext& ctx) {
  const Json& tree = ctx.cfg->tree;
  const Json& co = tree.at("control");
  TensorGrid grid = grid_from_config(tree);
  CoefficientB b = b_from_config(grid, tree);
  const double gamma = jnum(tree, "gamma");
  const double T = jnum(tree, "T");
  ModeBasis basis = dirichlet_eigenpairs(grid.grid_y, jint(tree, "n_modes"));
  Box omega = omega_box_from(tree.at("omega"), grid.dim_x(), true);
  const int steps = jint(co, "steps");
  ControlStack stack(grid, basis, gamma, b, omega, T, steps, jint(tree, "n_modes"));
  LRSchedule schedule = build_schedule(T, gamma, 0.75, std::max(jint(co, "blocks"), 8));
  Rng rng(tree.at("seed").get<std::uint64_t>());
  Vec u0 = rng.normal_vector(stack.f_dim());
  const ControlLayout layout = co.at("layout") == "active-second"
                                   ? ControlLayout::active_second_half
                                   : ControlLayout::active_first_half;
  ControlRun run = lr_null_control(stack, u0, schedule, jint(co, "blocks"),
                                   jnum(co, "eps0"), layout);
  write_binary_block(ctx.dir / "control.bin", run.control, 0.0, stack.dt());
  Json blocks = Json::array();
  for (const auto& br : run.report.blocks) {
    Json bj;
    bj["j"] = br.j;
    bj["modes"] = br.n_modes;
    bj["residual_before"] = br.residual_before;
    bj["residual_after"] = br.residual_after;
    bj["cost"] = br.cost;
    bj["eps_pen"] = br.eps_pen;
    blocks.push_back(bj);
  }
  ctx.summary["final_norm_rel"] = run.report.final_norm / run.report.u0_norm;
  ctx.summary["cost"] = run.report.cost;
  ctx.summary["blocks"] = blocks;
}

void run_full_suite(RunContext& ctx);

using Runner = void (*)(RunContext&);

Runner runner_for(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::spectrum: return run_spectrum;
    case ExperimentKind::scaling: return run_scaling;
    case ExperimentKind::evolve: return run_evolve;
    case ExperimentKind::carleman_verify: return run_carleman;
    case ExperimentKind::lr_schedule: return run_lr;
    case ExperimentKind::observability: return run_observability;
    case ExperimentKind::invert: return run_invert;
    case ExperimentKind::control: return run_control;
    case ExperimentKind::full_suite: return run_full_suite;
  }
  fail(Errc::config, "unhandled kind");
}

void run_full_suite(RunContext& ctx) {
  // curated desk-scale pass over every subsystem with quick settings
  Json parts = Json::object();
  auto sub = [&](ExperimentKind kind, std::initializer_list<std::pair<std::string, std::string>>
                                          overrides) {
    ExperimentConfig c = ExperimentConfig::parse(default_config_text(kind));
    for (const auto& [k, v] : overrides) c.set_override(k, v);
    RunContext sctx{ctx.cfg, ctx.dir / kind_name(kind), Json::object(), 0};
    fs::create_directories(sctx.dir);
    sctx.cfg = &c;
    runner_for(kind)(sctx);
    write_json_file(sctx.dir / "summary.json", sctx.summary);
    parts[kind_name(kind)] = sctx.summary;
    if (sctx.exit_code != 0) ctx.exit_code = sctx.exit_code;
  };
  sub(ExperimentKind::spectrum, {});
  sub(ExperimentKind::scaling, {{"scaling.points", "5"},
                                {"scaling.n_x", "801"},
                                {"scaling.gammas", "[0.5]"}});
  sub(ExperimentKind::lr_schedule, {});
  sub(ExperimentKind::carleman_verify, {{"carleman.samples", "10"}});
  sub(ExperimentKind::observability, {{"observability.n_hi", "8"},
                                      {"observability.steps", "200"}});
  sub(ExperimentKind::invert, {{"steps", "200"}, {"n_modes", "6"}});
  sub(ExperimentKind::control, {{"control.steps", "400"}, {"n_modes", "8"},
                                {"control.blocks", "3"}});
  ctx.summary["parts"] = parts;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const std::string& out_root) {
  const auto start = std::chrono::steady_clock::now();
  RunResult res;
  res.dir = fs::path(out_root) /
            (std::string(kind_name(config.kind)) + "-" + config.content_hash());
  fs::create_directories(res.dir);
  RunContext ctx{&config, res.dir, Json::object(), 0};
  runner_for(config.kind)(ctx);
  res.summary = ctx.summary;
  res.exit_code = ctx.exit_code;
  write_json_file(res.dir / "summary.json", ctx.summary);
  const auto stop = std::chrono::steady_clock::now();
  Json manifest;
  manifest["config"] = config.tree;
  manifest["version"] = "1.0.0";
  manifest["timings"] = {
      {"wall_seconds",
       std::chrono::duration_cast<std::chrono::milliseconds>(stop - start).count() / 1000.0}};
  write_json_file(res.dir / "manifest.json", manifest);
  return res;
}

}  // namespace grushin
