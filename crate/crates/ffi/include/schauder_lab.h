#ifndef SCHAUDER_LAB_H
#define SCHAUDER_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum SlStatus {
  SL_STATUS_OK = 0,
  SL_STATUS_NULL_POINTER = 1,
  SL_STATUS_INVALID_UTF8 = 2,
  SL_STATUS_CONFIG = 3,
  SL_STATUS_DOMAIN = 4,
  SL_STATUS_SHAPE = 5,
  SL_STATUS_ORDERING = 6,
  SL_STATUS_NUMERICAL = 7,
  SL_STATUS_UNSUPPORTED = 8,
  SL_STATUS_NON_CONVERGENCE = 9,
  SL_STATUS_IO = 10,
  SL_STATUS_JSON = 11,
  SL_STATUS_MODEL = 12,
  SL_STATUS_PANIC = 13,
} SlStatus;

// Solved field on a grid.
typedef struct SlField SlField;

// Chain problem built from the catalog.
typedef struct SlProblem SlProblem;

// Frozen Gaussian proxy.
typedef struct SlProxy SlProxy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the next call.
const char *sl_last_error(void);

// Library version as a static string.
const char *sl_version(void);

// Builds a catalog problem. `params_json` may be null for defaults.
//
// # Safety
// String arguments must be null or NUL-terminated; `out` must be writable.
enum SlStatus sl_problem_new(const char *id,
                             const char *params_json,
                             double gamma,
                             double horizon,
                             struct SlProblem **out);

// Releases a problem; null is ignored.
//
// # Safety
// `p` must come from [`sl_problem_new`] and not be freed twice.
void sl_problem_free(struct SlProblem *p);

// State dimension `n * d`, or 0 for a null handle.
//
// # Safety
// `p` must be null or a live handle.
size_t sl_problem_dim(const struct SlProblem *p);

// Frozen proxy with freezing point `(tau, xi)` on `[tau, t_end]`.
//
// # Safety
// `xi` must hold `xi_len` values; `out` must be writable.
enum SlStatus sl_proxy_new(const struct SlProblem *problem,
                           double tau,
                           const double *xi,
                           size_t xi_len,
                           double t_end,
                           struct SlProxy **out);

// Releases a proxy; null is ignored.
//
// # Safety
// `p` must come from [`sl_proxy_new`] and not be freed twice.
void sl_proxy_free(struct SlProxy *p);

// Proxy density `p(t, s, x, y)`.
//
// # Safety
// `x` and `y` must hold `len` values; `out` must be writable.
enum SlStatus sl_proxy_density(const struct SlProxy *proxy,
                               double t,
                               double s,
                               const double *x,
                               const double *y,
                               size_t len,
                               double *out);

// Proxy covariance `K(t, s)` written row-major into `out` (`cap >= nd * nd`).
//
// # Safety
// `out` must have room for `cap` values.
enum SlStatus sl_proxy_covariance(const struct SlProxy *proxy,
                                  double t,
                                  double s,
                                  double *out,
                                  size_t cap);

// Parametrix solve. `grid_json` follows the `grid` block of an experiment
// config; `solver_json` may be null for defaults.
//
// # Safety
// String arguments must be null or NUL-terminated; `out` must be writable.
enum SlStatus sl_solve(const struct SlProblem *problem,
                       const char *grid_json,
                       const char *solver_json,
                       struct SlField **out);

// Releases a field; null is ignored.
//
// # Safety
// `f` must come from [`sl_solve`] and not be freed twice.
void sl_field_free(struct SlField *f);

// Interpolated value `u(t, x)`.
//
// # Safety
// `x` must hold `len` values; `out` must be writable.
enum SlStatus sl_field_eval(const struct SlField *field,
                            double t,
                            const double *x,
                            size_t len,
                            double *out);

// Picard iterations used, and whether the iteration converged.
//
// # Safety
// Output pointers must be null or writable.
enum SlStatus sl_field_info(const struct SlField *field, size_t *iterations, bool *converged);

// Feynman–Kac Monte Carlo estimate of `u(t, x)` with its 95% half-width.
//
// # Safety
// `x` must hold `len` values; output pointers must be writable.
enum SlStatus sl_fk_estimate(const struct SlProblem *problem,
                             double t,
                             const double *x,
                             size_t len,
                             size_t paths,
                             size_t steps,
                             uint64_t seed,
                             bool antithetic,
                             double *estimate,
                             double *halfwidth);

// Runs an experiment from its JSON config. On success `summary_out`
// receives the summary JSON (free with [`sl_string_free`]) and `exit_code`
// the CLI exit code (0 all pass, 2 some diagnostic failed).
//
// # Safety
// `config_json` must be NUL-terminated; output pointers must be writable.
enum SlStatus sl_run_experiment(const char *config_json, char **summary_out, int32_t *exit_code);

// Releases a string returned by this library; null is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void sl_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCHAUDER_LAB_H */
