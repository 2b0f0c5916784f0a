#pragma once

#include "core/common.hpp"

#include <filesystem>
#include <iosfwd>

#include <json.hpp>

namespace grushin {

using Json = nlohmann::json;  // std::map keys: stable alphabetical order

/// Regression constants discovered by the calibration experiments and frozen
/// as defaults (the theory proves existence, not values; see README).
namespace defaults {
// Carleman ratio calibration, per epsilon branch (gamma >= 1/2 and < 1/2):
// 0.5 / (max L/R over the 50-sample regression suite), seed 1234, mu
// log-uniform in [10, 1e4], N_x = 201 on (-1,1), T = 1, 250 CN steps.
inline constexpr double kCarlemanC1HighGamma = 3.4742e-3;
inline constexpr double kCarlemanC1LowGamma = 6.6771e-3;
inline constexpr double kCarlemanC2 = 1.0;
// Dyadic recursion constants exported by the observability calibration for
// the default gamma = 0.5 geometry (blocks j = 2..4 over their own windows),
// plus the fitted dissipation prefactor of the same geometry.
inline constexpr double kRecursionC1 = 2.185;
inline constexpr double kRecursionC2 = 1.0;
inline constexpr double kRecursionC3 = 1.0;
inline constexpr double kCStarGamma05 = 1.0;
inline constexpr double kLrDefaultT = 4.0;
inline constexpr int kLrDefaultDepth = 56;
}  // namespace defaults

/// Experiment kinds, one per CLI subcommand.
enum class ExperimentKind {
  spectrum,
  scaling,
  evolve,
  carleman_verify,
  lr_schedule,
  observability,
  invert,
  control,
  full_suite,
};

const char* kind_name(ExperimentKind k);
ExperimentKind kind_from_name(const std::string& name);

/// Parsed, validated experiment configuration. `echo()` serializes the fully
/// materialized tree (defaults filled in); parsing the echo reproduces an
/// equivalent config.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::spectrum;
  Json tree;  // materialized tree, including defaults

  static ExperimentConfig parse(const std::string& json_text);
  static ExperimentConfig parse_file(const std::string& path);
  /// Applies a dotted-path override ("lr.depth=48"); value parsed as JSON
  /// with a string fallback.
  void set_override(const std::string& dotted_key, const std::string& value);
  void validate();  // throws Errc::config on violations
  std::string echo() const;
  std::string content_hash() const;  // FNV-1a over the echo
};

struct RunResult {
  std::filesystem::path dir;
  Json summary;
  int exit_code = 0;  // 0 ok, 2 invalid config, 3 verification failure
};

/// Executes the configured experiment into out_root/<kind>-<hash>/ and
/// returns the summary. Deterministic at fixed config and seeds; only the
/// manifest's timing section varies between repeats.
RunResult run_experiment(const ExperimentConfig& config, const std::string& out_root);

/// Default desk-scale configuration for a kind (also the CLI default).
std::string default_config_text(ExperimentKind kind);

// ---- artifact file helpers (formats documented in the README) ----

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// Binary block: magic "GRNTRJ", version byte 1, pad byte, u64 rows, u64
/// cols, f64 t0, f64 dt, then row-major f64 data (all little-endian).
void write_binary_block(const std::filesystem::path& path, const Mat& data, double t0,
                        double dt);
Mat read_binary_block(const std::filesystem::path& path, double* t0 = nullptr,
                      double* dt = nullptr);

void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace grushin
