#ifndef PARISI_H
#define PARISI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes shared by all entry points.
typedef enum ParisiStatus {
  PARISI_STATUS_OK = 0,
  PARISI_STATUS_NULL_POINTER = 1,
  PARISI_STATUS_INVALID_ARGUMENT = 2,
  PARISI_STATUS_NUMERICAL = 3,
  PARISI_STATUS_CONFIG = 4,
  PARISI_STATUS_IO = 5,
  PARISI_STATUS_PANIC = 6,
} ParisiStatus;

// Opaque covariance model `ξ`.
typedef struct ParisiModel ParisiModel;

// Opaque nondecreasing path `q`.
typedef struct ParisiPath ParisiPath;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Owned by the library.
const char *parisi_last_error(void);

// Library version as a static string.
const char *parisi_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and must not be used afterwards.
void parisi_string_free(char *s);

// Builds a model from its JSON spec (`{"kind": ..., "dim": ..., "coefficients": ...}`).
//
// # Safety
// `spec_json` must be a nul-terminated string; `out` must be writable.
enum ParisiStatus parisi_model_from_json(const char *spec_json, struct ParisiModel **out);

// # Safety
// `model` must come from [`parisi_model_from_json`] or be null.
void parisi_model_free(struct ParisiModel *model);

// Dimension `D` of the model.
//
// # Safety
// Pointers must be valid.
enum ParisiStatus parisi_model_dim(const struct ParisiModel *model, uintptr_t *out);

// `ξ(a)` for a row-major `dim × dim` matrix.
//
// # Safety
// `a` must point to `dim²` doubles; other pointers must be valid.
enum ParisiStatus parisi_model_eval(const struct ParisiModel *model,
                                    const double *a,
                                    uintptr_t dim,
                                    double *out);

// `ξ*(y)`; the maximizer is written row-major to `argmax` when it is non-null.
//
// # Safety
// `y` (and `argmax` if non-null) must hold `dim²` doubles.
enum ParisiStatus parisi_conjugate(const struct ParisiModel *model,
                                   const double *y,
                                   uintptr_t dim,
                                   double tol,
                                   double *value,
                                   double *argmax);

// Builds a path from its JSON spec (`{"type": "step" | "ramp_step", ...}`).
//
// # Safety
// `spec_json` must be a nul-terminated string; `out` must be writable.
enum ParisiStatus parisi_path_from_json(const char *spec_json, struct ParisiPath **out);

// # Safety
// `path` must come from [`parisi_path_from_json`] or be null.
void parisi_path_free(struct ParisiPath *path);

// Ellipticity constant of the path; `0` when no certificate was found.
//
// # Safety
// Pointers must be valid.
enum ParisiStatus parisi_path_certificate(const struct ParisiPath *path, double *out);

// `ψ(q)` by Gauss–Hermite recursion with the default grid and the default
// spin law for the dimension; ramps are averaged over `cells` cells.
//
// # Safety
// Pointers must be valid.
enum ParisiStatus parisi_psi(const struct ParisiPath *path, uintptr_t cells, double *out);

// Runs a CLI command on a JSON config and returns the report JSON.
// Status is `Ok` even when the report records a failed assertion.
//
// # Safety
// Strings must be nul-terminated; the report must be freed with [`parisi_string_free`].
enum ParisiStatus parisi_run_json(const char *command, const char *config_json, char **report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARISI_H */
