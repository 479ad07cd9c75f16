#include "xdhom/xdhom.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "core/effective.hpp"
#include "core/error.hpp"
#include "core/harness.hpp"
#include "core/models.hpp"

struct xdhom_config {
  xdhom::RunConfig config;
};

struct xdhom_model {
  xdhom::DiffusionModel model;
};

struct xdhom_tensor {
  xdhom::EffectiveTensor tensor;
};

namespace {

thread_local std::string last_error;

xdhom_status status_of(xdhom::ErrorKind kind) {
  using xdhom::ErrorKind;
  switch (kind) {
    case ErrorKind::Configuration:
    case ErrorKind::Geometry:
    case ErrorKind::Resolution:
    case ErrorKind::Coefficient:
    case ErrorKind::Parameter:
    case ErrorKind::Input:
      return XDHOM_ERROR_CONFIG;
    case ErrorKind::Solver:
    case ErrorKind::Step:
      return XDHOM_ERROR_SOLVER;
    case ErrorKind::Io:
      return XDHOM_ERROR_IO;
    case ErrorKind::Internal:
      break;
  }
  return XDHOM_ERROR_INTERNAL;
}

template <class F>
xdhom_status guarded(F&& body) {
  last_error.clear();
  try {
    return body();
  } catch (const xdhom::Error& e) {
    last_error = std::string(xdhom::to_string(e.kind())) + ": " + e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    last_error = std::string("configuration: ") + e.what();
    return XDHOM_ERROR_CONFIG;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return XDHOM_ERROR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = std::string("internal: ") + e.what();
    return XDHOM_ERROR_INTERNAL;
  }
}

xdhom_status invalid(const char* what) {
  last_error = std::string("invalid argument: ") + what;
  return XDHOM_ERROR_INVALID_ARGUMENT;
}

char* copy_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* xdhom_version(void) { return "0.1.0"; }

const char* xdhom_last_error(void) { return last_error.c_str(); }

void xdhom_string_free(char* s) { delete[] s; }

xdhom_status xdhom_config_load(const char* path, xdhom_config** out) {
  if (!path || !out) return invalid("null path or output");
  *out = nullptr;
  return guarded([&] {
    *out = new xdhom_config{xdhom::load_config(path)};
    return XDHOM_OK;
  });
}

xdhom_status xdhom_config_parse(const char* json_text, xdhom_config** out) {
  if (!json_text || !out) return invalid("null text or output");
  *out = nullptr;
  return guarded([&] {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
      xdhom::fail(xdhom::ErrorKind::Configuration, std::string("invalid JSON: ") + e.what());
    }
    *out = new xdhom_config{xdhom::parse_config(doc)};
    return XDHOM_OK;
  });
}

void xdhom_config_free(xdhom_config* config) { delete config; }

xdhom_status xdhom_model_create(const char* name, const char* params_json, xdhom_model** out) {
  if (!name || !out) return invalid("null name or output");
  *out = nullptr;
  return guarded([&] {
    nlohmann::json params = nlohmann::json::object();
    if (params_json && *params_json) {
      try {
        params = nlohmann::json::parse(params_json);
      } catch (const nlohmann::json::parse_error& e) {
        xdhom::fail(xdhom::ErrorKind::Configuration, std::string("invalid parameter JSON: ") + e.what());
      }
    }
    *out = new xdhom_model{xdhom::builtin_model(name, params)};
    return XDHOM_OK;
  });
}

void xdhom_model_free(xdhom_model* model) { delete model; }

int xdhom_model_species(const xdhom_model* model) { return model ? model->model.n : 0; }

xdhom_status xdhom_model_diffusion_matrix(const xdhom_model* model, const double* u, double* a_out) {
  if (!model || !u || !a_out) return invalid("null argument");
  return guarded([&] {
    const int n = model->model.n;
    const xdhom::Vector state = Eigen::Map<const xdhom::Vector>(u, n);
    const xdhom::Matrix A = model->model.A(state);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a_out[i * n + j] = A(i, j);
    return XDHOM_OK;
  });
}

xdhom_status xdhom_model_entropy_gradient_inverse(const xdhom_model* model, const double* w, double* u_out) {
  if (!model || !w || !u_out) return invalid("null argument");
  return guarded([&] {
    const int n = model->model.n;
    const xdhom::Vector u = xdhom::entropy_gradient_inverse(model->model, Eigen::Map<const xdhom::Vector>(w, n));
    for (int i = 0; i < n; ++i) u_out[i] = u[i];
    return XDHOM_OK;
  });
}

xdhom_status xdhom_model_check(const xdhom_model* model, size_t samples, uint64_t seed, char** report_json) {
  if (!model || !report_json) return invalid("null argument");
  *report_json = nullptr;
  return guarded([&] {
    const auto report = xdhom::check_assumptions(model->model, samples, seed);
    *report_json = copy_string(xdhom::to_json(report).dump(2));
    return XDHOM_OK;
  });
}

xdhom_status xdhom_dhom(const xdhom_config* config, xdhom_tensor** out) {
  if (!config || !out) return invalid("null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new xdhom_tensor{xdhom::run_cell_problem(config->config).dhom};
    return XDHOM_OK;
  });
}

xdhom_status xdhom_tensor_at_state(const xdhom_config* config, const double* u, size_t n, xdhom_tensor** out) {
  if (!config || !u || !out) return invalid("null argument");
  *out = nullptr;
  return guarded([&] {
    nlohmann::json state{{"u", std::vector<double>(u, u + n)}};
    *out = new xdhom_tensor{xdhom::run_effective(config->config, state)};
    return XDHOM_OK;
  });
}

xdhom_status xdhom_tensor_shape(const xdhom_tensor* tensor, int* rank, int* species, int* dim) {
  if (!tensor) return invalid("null tensor");
  const auto& t = tensor->tensor;
  const bool four = t.kind == xdhom::EffectiveTensor::Kind::FourIndex;
  if (rank) *rank = four ? 4 : 2;
  if (species) *species = four ? t.species : 0;
  if (dim) *dim = t.dim;
  return XDHOM_OK;
}

xdhom_status xdhom_tensor_get(const xdhom_tensor* tensor, const int* index, double* value) {
  if (!tensor || !index || !value) return invalid("null argument");
  const auto& t = tensor->tensor;
  if (t.kind == xdhom::EffectiveTensor::Kind::FourIndex) {
    for (int a = 0; a < 4; ++a) {
      const int bound = a < 2 ? t.species : t.dim;
      if (index[a] < 0 || index[a] >= bound) return invalid("tensor index out of range");
    }
    *value = t(index[0], index[1], index[2], index[3]);
  } else {
    for (int a = 0; a < 2; ++a)
      if (index[a] < 0 || index[a] >= t.dim) return invalid("tensor index out of range");
    *value = t(index[0], index[1]);
  }
  last_error.clear();
  return XDHOM_OK;
}

xdhom_status xdhom_tensor_to_json(const xdhom_tensor* tensor, char** json_out) {
  if (!tensor || !json_out) return invalid("null argument");
  *json_out = nullptr;
  return guarded([&] {
    *json_out = copy_string(xdhom::to_json(tensor->tensor).dump(2));
    return XDHOM_OK;
  });
}

void xdhom_tensor_free(xdhom_tensor* tensor) { delete tensor; }

xdhom_status xdhom_run_cell(const xdhom_config* config, const char* out_dir) {
  if (!config || !out_dir) return invalid("null argument");
  return guarded([&] {
    xdhom::emit_cell(config->config, out_dir);
    return XDHOM_OK;
  });
}

xdhom_status xdhom_run_effective(const xdhom_config* config, const char* state_path, const char* out_dir) {
  if (!config || !state_path || !out_dir) return invalid("null argument");
  return guarded([&] {
    xdhom::emit_effective(config->config, xdhom::read_json_file(state_path), out_dir);
    return XDHOM_OK;
  });
}

xdhom_status xdhom_run_macro(const xdhom_config* config, const char* out_dir) {
  if (!config || !out_dir) return invalid("null argument");
  return guarded([&] {
    xdhom::emit_macro(config->config, out_dir);
    return XDHOM_OK;
  });
}

xdhom_status xdhom_run_micro(const xdhom_config* config, double eps, const char* out_dir) {
  if (!config || !out_dir) return invalid("null argument");
  return guarded([&] {
    xdhom::emit_micro(config->config, eps, out_dir);
    return XDHOM_OK;
  });
}

xdhom_status xdhom_run_sweep(const xdhom_config* config, const char* out_dir) {
  if (!config || !out_dir) return invalid("null argument");
  return guarded([&] {
    if (xdhom::emit_sweep(config->config, out_dir)) return XDHOM_OK;
    last_error = "some eps runs failed; see sweep.json";
    return XDHOM_ERROR_SOLVER;
  });
}

}  // extern "C"
