#ifndef XDHOM_XDHOM_H
#define XDHOM_XDHOM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(XDHOM_BUILDING_LIBRARY)
#define XDHOM_API __attribute__((visibility("default")))
#else
#define XDHOM_API
#endif

/* Status codes. The configuration, solver and I/O codes double as the
   command-line exit codes. */
typedef enum xdhom_status {
  XDHOM_OK = 0,
  XDHOM_ERROR_INTERNAL = 1,
  XDHOM_ERROR_CONFIG = 2,
  XDHOM_ERROR_SOLVER = 3,
  XDHOM_ERROR_IO = 4,
  XDHOM_ERROR_INVALID_ARGUMENT = 5
} xdhom_status;

typedef struct xdhom_config xdhom_config;
typedef struct xdhom_model xdhom_model;
typedef struct xdhom_tensor xdhom_tensor;

XDHOM_API const char* xdhom_version(void);

/* Message of the last failed call on this thread ("" if none). Valid until
   the next call on the same thread. */
XDHOM_API const char* xdhom_last_error(void);

/* Frees strings returned through char** out-parameters. */
XDHOM_API void xdhom_string_free(char* s);

/* Configuration documents (see docs/config.md). */
XDHOM_API xdhom_status xdhom_config_load(const char* path, xdhom_config** out);
XDHOM_API xdhom_status xdhom_config_parse(const char* json_text, xdhom_config** out);
XDHOM_API void xdhom_config_free(xdhom_config* config);

/* Built-in models: "biofilm", "tumor", "ion_transport", "scalar". */
XDHOM_API xdhom_status xdhom_model_create(const char* name, const char* params_json, xdhom_model** out);
XDHOM_API void xdhom_model_free(xdhom_model* model);
XDHOM_API int xdhom_model_species(const xdhom_model* model);
/* A(u), written row-major into an n*n buffer. */
XDHOM_API xdhom_status xdhom_model_diffusion_matrix(const xdhom_model* model, const double* u, double* a_out);
/* u = (h')^{-1}(w), n entries each. */
XDHOM_API xdhom_status xdhom_model_entropy_gradient_inverse(const xdhom_model* model, const double* w,
                                                            double* u_out);
/* Assumption report as a JSON string; free with xdhom_string_free. */
XDHOM_API xdhom_status xdhom_model_check(const xdhom_model* model, size_t samples, uint64_t seed,
                                         char** report_json);

/* Tensors. Rank 4 tensors are indexed (i, l, m, k), rank 2 tensors (k, l);
   indices are zero-based. */
XDHOM_API xdhom_status xdhom_dhom(const xdhom_config* config, xdhom_tensor** out);
XDHOM_API xdhom_status xdhom_tensor_at_state(const xdhom_config* config, const double* u, size_t n,
                                             xdhom_tensor** out);
XDHOM_API xdhom_status xdhom_tensor_shape(const xdhom_tensor* tensor, int* rank, int* species, int* dim);
XDHOM_API xdhom_status xdhom_tensor_get(const xdhom_tensor* tensor, const int* index, double* value);
XDHOM_API xdhom_status xdhom_tensor_to_json(const xdhom_tensor* tensor, char** json_out);
XDHOM_API void xdhom_tensor_free(xdhom_tensor* tensor);

/* Command drivers. Each writes its files into out_dir, creating it. */
XDHOM_API xdhom_status xdhom_run_cell(const xdhom_config* config, const char* out_dir);
XDHOM_API xdhom_status xdhom_run_effective(const xdhom_config* config, const char* state_path, const char* out_dir);
XDHOM_API xdhom_status xdhom_run_macro(const xdhom_config* config, const char* out_dir);
XDHOM_API xdhom_status xdhom_run_micro(const xdhom_config* config, double eps, const char* out_dir);
/* Returns XDHOM_ERROR_SOLVER when some eps row failed; the partial report
   is still written. */
XDHOM_API xdhom_status xdhom_run_sweep(const xdhom_config* config, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif
