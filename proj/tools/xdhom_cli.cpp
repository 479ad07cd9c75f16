#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "xdhom/xdhom.h"

namespace {

int exit_code(xdhom_status s) {
  switch (s) {
    case XDHOM_OK: return 0;
    case XDHOM_ERROR_CONFIG:
    case XDHOM_ERROR_INVALID_ARGUMENT: return 2;
    case XDHOM_ERROR_SOLVER: return 3;
    case XDHOM_ERROR_IO: return 4;
    default: return 1;
  }
}

int report(xdhom_status s) {
  if (s != XDHOM_OK) std::fprintf(stderr, "xdhom: %s\n", xdhom_last_error());
  return exit_code(s);
}

struct ConfigHandle {
  xdhom_config* ptr = nullptr;
  ~ConfigHandle() { xdhom_config_free(ptr); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Periodic homogenization of degenerate cross-diffusion systems"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(xdhom_version()));

  std::string config, out, state, model, params;
  double eps = 0.0;
  std::size_t samples = 1000;
  std::uint64_t seed = 0;

  auto* cell = app.add_subcommand("cell", "solve the cell problems and write correctors and D_hom");
  cell->add_option("--config", config, "configuration JSON")->required();
  cell->add_option("--out", out, "output directory")->required();

  auto* effective = app.add_subcommand("effective", "effective tensor at a given state");
  effective->add_option("--config", config, "configuration JSON")->required();
  effective->add_option("--state", state, "state JSON {\"u\": [...]}")->required();
  effective->add_option("--out", out, "output directory")->required();

  auto* macro = app.add_subcommand("macro", "transient run of the homogenized system");
  macro->add_option("--config", config, "configuration JSON")->required();
  macro->add_option("--out", out, "output directory")->required();

  auto* micro = app.add_subcommand("micro", "transient run of the oscillating system");
  micro->add_option("--config", config, "configuration JSON")->required();
  micro->add_option("--eps", eps, "period scale eps")->required();
  micro->add_option("--out", out, "output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "eps-convergence study");
  sweep->add_option("--config", config, "configuration JSON")->required();
  sweep->add_option("--out", out, "output directory")->required();

  auto* check = app.add_subcommand("check", "sample the structural assumptions of a model");
  check->add_option("--model", model, "biofilm, tumor, ion_transport or scalar")->required();
  check->add_option("--params", params, "model parameter JSON file");
  check->add_option("--samples", samples, "number of sampled states")->capture_default_str();
  check->add_option("--seed", seed, "random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (check->parsed()) {
    std::string text;
    if (!params.empty()) {
      std::ifstream in(params);
      if (!in) {
        std::fprintf(stderr, "xdhom: cannot open '%s'\n", params.c_str());
        return 4;
      }
      std::stringstream buffer;
      buffer << in.rdbuf();
      text = buffer.str();
    }
    xdhom_model* m = nullptr;
    if (auto s = xdhom_model_create(model.c_str(), text.c_str(), &m); s != XDHOM_OK) return report(s);
    char* json = nullptr;
    const auto s = xdhom_model_check(m, samples, seed, &json);
    xdhom_model_free(m);
    if (s != XDHOM_OK) return report(s);
    std::fputs(json, stdout);
    std::fputc('\n', stdout);
    xdhom_string_free(json);
    return 0;
  }

  ConfigHandle cfg;
  if (auto s = xdhom_config_load(config.c_str(), &cfg.ptr); s != XDHOM_OK) return report(s);
  if (cell->parsed()) return report(xdhom_run_cell(cfg.ptr, out.c_str()));
  if (effective->parsed()) return report(xdhom_run_effective(cfg.ptr, state.c_str(), out.c_str()));
  if (macro->parsed()) return report(xdhom_run_macro(cfg.ptr, out.c_str()));
  if (micro->parsed()) return report(xdhom_run_micro(cfg.ptr, eps, out.c_str()));
  return report(xdhom_run_sweep(cfg.ptr, out.c_str()));
}
