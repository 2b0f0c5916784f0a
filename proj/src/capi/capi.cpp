#include "grushin.h"

#include "core/carleman.hpp"
#include "core/experiment.hpp"
#include "core/lr_schedule.hpp"

#include <string>

#define GRN_EXPORT __attribute__((visibility("default")))

namespace {

thread_local std::string g_last_error;

grn_status status_of(grushin::Errc c) {
  switch (c) {
    case grushin::Errc::invalid_argument: return GRN_ERR_INVALID_ARGUMENT;
    case grushin::Errc::config: return GRN_ERR_CONFIG;
    case grushin::Errc::verification: return GRN_ERR_VERIFICATION;
    case grushin::Errc::numerical: return GRN_ERR_NUMERICAL;
    case grushin::Errc::io: return GRN_ERR_IO;
  }
  return GRN_ERR_NUMERICAL;
}

template <typename Fn>
grn_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return GRN_OK;
  } catch (const grushin::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GRN_ERR_NUMERICAL;
  } catch (...) {
    g_last_error = "unknown error";
    return GRN_ERR_NUMERICAL;
  }
}

}  // namespace

struct grn_config {
  grushin::ExperimentConfig cfg;
  std::string echo_buffer;
};

struct grn_result {
  std::string dir;
  std::string summary;
  int exit_code = 0;
};

extern "C" {

GRN_EXPORT const char* grn_version(void) { return "1.0.0"; }

GRN_EXPORT const char* grn_last_error(void) { return g_last_error.c_str(); }

GRN_EXPORT grn_status grn_config_parse(const char* json_text, grn_config** out) {
  if (!json_text || !out) {
    g_last_error = "null argument";
    return GRN_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    auto* handle = new grn_config{grushin::ExperimentConfig::parse(json_text), {}};
    *out = handle;
  });
}

GRN_EXPORT grn_status grn_config_parse_file(const char* path, grn_config** out) {
  if (!path || !out) {
    g_last_error = "null argument";
    return GRN_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    auto* handle = new grn_config{grushin::ExperimentConfig::parse_file(path), {}};
    *out = handle;
  });
}

GRN_EXPORT grn_status grn_config_default(const char* kind, grn_config** out) {
  if (!kind || !out) {
    g_last_error = "null argument";
    return GRN_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    auto text = grushin::default_config_text(grushin::kind_from_name(kind));
    auto* handle = new grn_config{grushin::ExperimentConfig::parse(text), {}};
    *out = handle;
  });
}

GRN_EXPORT grn_status grn_config_set(grn_config* cfg, const char* dotted_key,
                                     const char* value) {
  if (!cfg || !dotted_key || !value) {
    g_last_error = "null argument";
    return GRN_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] { cfg->cfg.set_override(dotted_key, value); });
}

GRN_EXPORT const char* grn_config_echo(grn_config* cfg) {
  if (!cfg) return "";
  cfg->echo_buffer = cfg->cfg.echo();
  return cfg->echo_buffer.c_str();
}

GRN_EXPORT void grn_config_free(grn_config* cfg) { delete cfg; }

GRN_EXPORT grn_status grn_run(const grn_config* cfg, const char* out_root,
                              grn_result** out) {
  if (!cfg || !out_root || !out) {
    g_last_error = "null argument";
    return GRN_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    grushin::RunResult res = grushin::run_experiment(cfg->cfg, out_root);
    auto* handle = new grn_result{res.dir.string(), res.summary.dump(2) + "\n", res.exit_code};
    *out = handle;
  });
}

GRN_EXPORT const char* grn_result_dir(const grn_result* res) {
  return res ? res->dir.c_str() : "";
}

GRN_EXPORT const char* grn_result_summary_json(const grn_result* res) {
  return res ? res->summary.c_str() : "";
}

GRN_EXPORT int grn_result_exit_code(const grn_result* res) {
  return res ? res->exit_code : 4;
}

GRN_EXPORT void grn_result_free(grn_result* res) { delete res; }

GRN_EXPORT grn_status grn_p_exponent(double gamma, double* out) {
  if (!out) {
    g_last_error = "null argument";
    return GRN_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] { *out = grushin::p_exponent(gamma); });
}

GRN_EXPORT grn_status grn_carleman_m(double T, double mu, double gamma, double c2,
                                     double* out) {
  if (!out) {
    g_last_error = "null argument";
    return GRN_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] { *out = grushin::carleman_M(T, mu, gamma, c2); });
}

GRN_EXPORT grn_status grn_lambda_cutoff(int n, double c_star, double gamma, double* out) {
  if (!out) {
    g_last_error = "null argument";
    return GRN_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] { *out = grushin::lambda_cutoff(n, c_star, gamma); });
}

GRN_EXPORT int grn_exit_code(grn_status s) {
  switch (s) {
    case GRN_OK: return 0;
    case GRN_ERR_CONFIG: return 2;
    case GRN_ERR_INVALID_ARGUMENT: return 2;
    case GRN_ERR_VERIFICATION: return 3;
    default: return 4;
  }
}

}  // extern "C"
