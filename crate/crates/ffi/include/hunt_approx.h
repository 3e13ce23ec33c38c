#ifndef HUNT_APPROX_H
#define HUNT_APPROX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum HaStatus {
  HA_STATUS_OK = 0,
  HA_STATUS_NULL_POINTER = 1,
  HA_STATUS_INVALID_ARGUMENT = 2,
  HA_STATUS_DIMENSION_MISMATCH = 3,
  HA_STATUS_SINGULAR = 4,
  HA_STATUS_NOT_CONVERGED = 5,
  HA_STATUS_CHECK_FAILED = 6,
  HA_STATUS_PANIC = 7,
} HaStatus;

/**
 * A sub-Markov generator on `n` states.
 */
typedef struct HaGenerator HaGenerator;

/**
 * A state space with masses and reference function.
 */
typedef struct HaSpace HaSpace;

/**
 * A Yosida approximation `L^β` together with its chain step.
 */
typedef struct HaYosida HaYosida;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length, or 0
 * if there is none.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t ha_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ha_version(void);

/**
 * Builds a generator from an `n × n` row-major rate matrix.
 *
 * # Safety
 * `rates` must point to `n * n` doubles and `out` to writable storage.
 */
enum HaStatus ha_generator_new(const double *rates, size_t n, struct HaGenerator **out);

/**
 * Releases a generator; null is ignored.
 *
 * # Safety
 * `g` must come from `ha_generator_new` and not be used afterwards.
 */
void ha_generator_free(struct HaGenerator *g);

/**
 * Number of states of `g`, or 0 for null.
 *
 * # Safety
 * `g` must be null or a live generator.
 */
size_t ha_generator_len(const struct HaGenerator *g);

/**
 * Writes `G_α = (αI − L)^{-1}` into `out` (`n × n`, row-major).
 *
 * # Safety
 * `g` must be a live generator and `out` valid for `out_len` doubles.
 */
enum HaStatus ha_resolvent(const struct HaGenerator *g, double alpha, double *out, size_t out_len);

/**
 * Builds a state space from masses and reference-function values.
 *
 * # Safety
 * `mass` and `phi` must point to `n` doubles; `out` must be writable.
 */
enum HaStatus ha_space_new(const double *mass, const double *phi, size_t n, struct HaSpace **out);

/**
 * Releases a state space; null is ignored.
 *
 * # Safety
 * `s` must come from `ha_space_new` and not be used afterwards.
 */
void ha_space_free(struct HaSpace *s);

/**
 * The réduite of `f` on the set given by `mask` (nonzero bytes are
 * members) at order `alpha`, written to `out`.
 *
 * # Safety
 * `f`, `mask` and `out` must each cover `n` entries.
 */
enum HaStatus ha_reduite(const struct HaGenerator *g,
                         const double *f,
                         const uint8_t *mask,
                         size_t n,
                         double alpha,
                         double tol,
                         double *out);

/**
 * The strict capacity of the set given by `mask`.
 *
 * # Safety
 * `mask` must cover `n` bytes and `out` must be writable.
 */
enum HaStatus ha_capacity(const struct HaGenerator *g,
                          const struct HaSpace *space,
                          const uint8_t *mask,
                          size_t n,
                          double *out);

/**
 * Builds the Yosida approximation of `g` at `beta`.
 *
 * # Safety
 * `g` must be a live generator and `out` writable.
 */
enum HaStatus ha_yosida_new(const struct HaGenerator *g, double beta, struct HaYosida **out);

/**
 * Releases a Yosida approximation; null is ignored.
 *
 * # Safety
 * `y` must come from `ha_yosida_new` and not be used afterwards.
 */
void ha_yosida_free(struct HaYosida *y);

/**
 * Writes `L^β` into `out` (`n × n`, row-major).
 *
 * # Safety
 * `y` must be live and `out` valid for `out_len` doubles.
 */
enum HaStatus ha_yosida_generator(const struct HaYosida *y, double *out, size_t out_len);

/**
 * `P^β_t f` by the Poisson series; the excluded tail mass goes to
 * `truncation` when it is non-null.
 *
 * # Safety
 * `f` and `out` must cover `n` doubles; `truncation` may be null.
 */
enum HaStatus ha_semigroup_apply(const struct HaYosida *y,
                                 double t,
                                 const double *f,
                                 size_t n,
                                 double tail_tol,
                                 double *out,
                                 double *truncation);

/**
 * Closed-form resolvent `R^β_α` of the Yosida approximation.
 *
 * # Safety
 * `g` must be live and `out` valid for `out_len` doubles.
 */
enum HaStatus ha_approx_resolvent(const struct HaGenerator *g,
                                  double alpha,
                                  double beta,
                                  double *out,
                                  size_t out_len);

/**
 * Monte Carlo estimate of `E_x[∫₀^∞ e^{−αt} f(X^β_t) dt]` from `n_paths`
 * paths on `[0, horizon]`.
 *
 * # Safety
 * `f` must cover `n` doubles; `mean` and `std_error` must be writable.
 */
enum HaStatus ha_simulate_laplace(const struct HaYosida *y,
                                  size_t x,
                                  double alpha,
                                  const double *f,
                                  size_t n,
                                  size_t n_paths,
                                  double horizon,
                                  uint64_t seed,
                                  double *mean,
                                  double *std_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HUNT_APPROX_H */
