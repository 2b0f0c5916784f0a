// Command-line front end; talks to the shared library exclusively through
// the C API in grushin.h.

#include <grushin.h>

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace {

int fail_with(grn_status s) {
  std::fprintf(stderr, "error: %s\n", grn_last_error());
  return grn_exit_code(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grushin — degenerate parabolic equation laboratory"};
  app.require_subcommand(1);

  const std::vector<std::string> kinds = {"spectrum",    "scaling",       "evolve",
                                          "carleman-verify", "lr-schedule",
                                          "observability", "invert",      "control",
                                          "full-suite"};
  std::string config_path;
  std::string out_root = "runs";
  std::vector<std::string> overrides;
  bool print_config = false;

  std::vector<CLI::App*> subs;
  for (const auto& kind : kinds) {
    CLI::App* sub = app.add_subcommand(kind, "run the " + kind + " experiment");
    sub->add_option("-c,--config", config_path, "JSON config file (defaults when omitted)");
    sub->add_option("-o,--out", out_root, "output root directory");
    sub->add_option("-s,--set", overrides,
                    "config override key=value (dotted path, repeatable)");
    sub->add_flag("--print-config", print_config,
                  "print the materialized config and exit");
    subs.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);

  std::string kind;
  for (std::size_t i = 0; i < subs.size(); ++i)
    if (subs[i]->parsed()) kind = kinds[i];

  grn_config* cfg = nullptr;
  grn_status s = config_path.empty() ? grn_config_default(kind.c_str(), &cfg)
                                     : grn_config_parse_file(config_path.c_str(), &cfg);
  if (s != GRN_OK) return fail_with(s);
  // the subcommand pins the kind; file configs may carry another
  if ((s = grn_config_set(cfg, "kind", ("\"" + kind + "\"").c_str())) != GRN_OK) {
    grn_config_free(cfg);
    return fail_with(s);
  }
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: override must look like key=value: %s\n", ov.c_str());
      grn_config_free(cfg);
      return 2;
    }
    s = grn_config_set(cfg, ov.substr(0, eq).c_str(), ov.substr(eq + 1).c_str());
    if (s != GRN_OK) {
      grn_config_free(cfg);
      return fail_with(s);
    }
  }
  if (print_config) {
    std::fputs(grn_config_echo(cfg), stdout);
    grn_config_free(cfg);
    return 0;
  }

  grn_result* res = nullptr;
  s = grn_run(cfg, out_root.c_str(), &res);
  grn_config_free(cfg);
  if (s != GRN_OK) return fail_with(s);
  std::printf("run dir: %s\n", grn_result_dir(res));
  std::fputs(grn_result_summary_json(res), stdout);
  const int code = grn_result_exit_code(res);
  grn_result_free(res);
  return code;
}
