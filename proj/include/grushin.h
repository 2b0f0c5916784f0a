/*
 * grushin — numerical laboratory for Grushin-type degenerate parabolic
 * equations: mode decomposition, dissipation-rate analysis, Carleman weights,
 * dyadic observability schedules, source reconstruction, and null control.
 *
 * C API of the shared library. All types are opaque handles; every call that
 * can fail returns a grn_status and leaves a thread-local message readable
 * via grn_last_error().
 */
#ifndef GRUSHIN_H
#define GRUSHIN_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum grn_status {
  GRN_OK = 0,
  GRN_ERR_INVALID_ARGUMENT = 1,
  GRN_ERR_CONFIG = 2,
  GRN_ERR_VERIFICATION = 3,
  GRN_ERR_NUMERICAL = 4,
  GRN_ERR_IO = 5,
} grn_status;

typedef struct grn_config grn_config;
typedef struct grn_result grn_result;

const char* grn_version(void);

/* Message of the most recent failure on this thread; empty string if none. */
const char* grn_last_error(void);

/* ---- experiment configuration ---- */

/* Parses a JSON config; unknown keys are rejected. */
grn_status grn_config_parse(const char* json_text, grn_config** out);
grn_status grn_config_parse_file(const char* path, grn_config** out);
/* Default desk-scale config for a subcommand kind ("spectrum", "scaling",
 * "evolve", "carleman-verify", "lr-schedule", "observability", "invert",
 * "control", "full-suite"). */
grn_status grn_config_default(const char* kind, grn_config** out);
/* Dotted-path override, e.g. grn_config_set(cfg, "lr.depth", "48"). The value
 * is parsed as JSON, with a bare-string fallback. */
grn_status grn_config_set(grn_config* cfg, const char* dotted_key, const char* value);
/* Serialized config with all defaults materialized. The pointer stays owned
 * by the handle and is valid until the next call on it. */
const char* grn_config_echo(grn_config* cfg);
void grn_config_free(grn_config* cfg);

/* ---- runs ---- */

/* Executes the experiment into out_root/<kind>-<confighash>/. A verification
 * failure is a *result* (exit code 3 on the handle), not an API error. */
grn_status grn_run(const grn_config* cfg, const char* out_root, grn_result** out);
const char* grn_result_dir(const grn_result* res);
const char* grn_result_summary_json(const grn_result* res);
/* 0 success, 3 verification failure (per the CLI exit-code contract). */
int grn_result_exit_code(const grn_result* res);
void grn_result_free(grn_result* res);

/* ---- small closed-form helpers ---- */

/* p(gamma) of the observability constant; gamma must lie in (0,1). */
grn_status grn_p_exponent(double gamma, double* out);
/* M = C2 max{T + T^2, mu^q T^2}, q = 1/2 for gamma >= 1/2 else 2/3. */
grn_status grn_carleman_m(double T, double mu, double gamma, double c2, double* out);
/* lambda(2^n) = c_star 2^(2n/(1+gamma)). */
grn_status grn_lambda_cutoff(int n, double c_star, double gamma, double* out);

/* Map a status to the CLI exit-code contract: 0 ok, 2 invalid config,
 * 3 verification failure, 4 anything else. */
int grn_exit_code(grn_status s);

#ifdef __cplusplus
}
#endif

#endif /* GRUSHIN_H */
