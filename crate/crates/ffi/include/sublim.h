/* C interface to the sublim library. Generated by cbindgen. */

#ifndef SUBLIM_H
#define SUBLIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status of a C-API call.
 */
typedef enum SublimStatus {
  SublimStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  SublimStatus_NullPointer = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  SublimStatus_InvalidUtf8 = 2,
  /**
   * Malformed configuration, expression or type invariant.
   */
  SublimStatus_Config = 3,
  /**
   * An argument was outside its admissible range.
   */
  SublimStatus_Parameter = 4,
  /**
   * A grid or domain was too small.
   */
  SublimStatus_Domain = 5,
  /**
   * A state-space cap was exceeded.
   */
  SublimStatus_Size = 6,
  /**
   * A non-finite value appeared during computation.
   */
  SublimStatus_Numeric = 7,
  /**
   * An internal failure (a bug); details in the error message.
   */
  SublimStatus_Internal = 8,
} SublimStatus;

/**
 * An ambiguity set under construction: measures are appended one at a
 * time and validated on use.
 */
typedef struct SublimFamily SublimFamily;

/**
 * A solved time slice of the G-heat equation on its grid.
 */
typedef struct SublimSolution SublimSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null if the
 * last call succeeded. The pointer is invalidated by the next failing
 * call on the same thread.
 */
const char *sublim_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sublim_version(void);

/**
 * Create an empty family of measures on ℝᵈ. Returns null when `dim` is
 * zero. Free with [`sublim_family_free`].
 */
struct SublimFamily *sublim_family_new(uintptr_t dim);

/**
 * Append one measure. `atoms` is row-major `n_atoms x dim`; `weights`
 * has `n_atoms` entries that must be nonnegative and sum to 1 within
 * 1e-12.
 *
 * # Safety
 * `family` must come from [`sublim_family_new`] and not yet be freed;
 * `atoms` and `weights` must point to arrays of the stated lengths.
 */
enum SublimStatus sublim_family_add_measure(struct SublimFamily *family,
                                            const double *atoms,
                                            const double *weights,
                                            uintptr_t n_atoms);

/**
 * Number of measures added so far.
 *
 * # Safety
 * `family` must be a live handle from [`sublim_family_new`].
 */
uintptr_t sublim_family_len(const struct SublimFamily *family);

/**
 * Destroy a family handle. Null is ignored.
 *
 * # Safety
 * `family` must come from [`sublim_family_new`] and must not be used
 * afterwards.
 */
void sublim_family_free(struct SublimFamily *family);

/**
 * Upper expectation `max_theta E_theta[f]` of an expression in `x`
 * over a one-dimensional family, with the least attaining index.
 *
 * # Safety
 * `family` must be a live handle; `expr` must be a NUL-terminated
 * string; `out_value` and `out_argmax` must be writable or null (null
 * outputs are skipped).
 */
enum SublimStatus sublim_upper_expectation(const struct SublimFamily *family,
                                           const char *expr,
                                           double *out_value,
                                           uintptr_t *out_argmax);

/**
 * Capacity of the escape event `{ |x| > radius }`.
 *
 * # Safety
 * `family` must be a live handle; `out` must be writable.
 */
enum SublimStatus sublim_capacity_norm_gt(const struct SublimFamily *family,
                                          double radius,
                                          double *out);

/**
 * Chebyshev tightness certificate: the smallest radius of the form
 * `k * 0.5` with `radius^l > E[|x|^l] / epsilon`, plus the direct
 * verification `c({|x| > radius}) < epsilon`.
 *
 * # Safety
 * `family` must be a live handle; non-null outputs must be writable.
 */
enum SublimStatus sublim_tightness_radius(const struct SublimFamily *family,
                                          double epsilon,
                                          double l,
                                          double *out_radius,
                                          bool *out_verified);

/**
 * Exact nested-maximization value of `E[phi(S_n / sqrt(n))]` for a
 * zero-mean one-dimensional family. Accepts unbounded expressions.
 *
 * # Safety
 * `family` must be a live handle; `expr` must be NUL-terminated; `out`
 * must be writable.
 */
enum SublimStatus sublim_clt_value_exact(const struct SublimFamily *family,
                                         const char *expr,
                                         uint32_t n,
                                         double *out);

/**
 * Grid dynamic-programming value of `E[phi(S_n / sqrt(n))]` with the
 * default grid span and the given spacing. The expression must stay
 * bounded (its sampled bounds are attached automatically).
 *
 * # Safety
 * As for [`sublim_clt_value_exact`].
 */
enum SublimStatus sublim_clt_value_dp(const struct SublimFamily *family,
                                      const char *expr,
                                      uint32_t n,
                                      double dx,
                                      double *out);

/**
 * Solve the G-heat equation `du/dt = G(D2u)` with variance interval
 * `[sigma_min_sq, sigma_max_sq]` up to `t_final` and return the final
 * slice as a solution handle. Free it with [`sublim_solution_free`].
 *
 * # Safety
 * `expr` must be NUL-terminated; `out` must be writable.
 */
enum SublimStatus sublim_gheat_solve(double sigma_min_sq,
                                     double sigma_max_sq,
                                     const char *expr,
                                     double half_width,
                                     double dx,
                                     double t_final,
                                     struct SublimSolution **out);

/**
 * G-normal expectation of a bounded expression: the G-heat solution at
 * time 1, evaluated at the origin.
 *
 * # Safety
 * `expr` must be NUL-terminated; `out` must be writable.
 */
enum SublimStatus sublim_gnormal_value(double sigma_min_sq,
                                       double sigma_max_sq,
                                       const char *expr,
                                       double half_width,
                                       double dx,
                                       double *out);

/**
 * Node count of a solution grid.
 *
 * # Safety
 * `solution` must be a live handle from [`sublim_gheat_solve`].
 */
uintptr_t sublim_solution_len(const struct SublimSolution *solution);

/**
 * Coordinate and value of node `i`.
 *
 * # Safety
 * `solution` must be a live handle; non-null outputs must be writable.
 */
enum SublimStatus sublim_solution_node(const struct SublimSolution *solution,
                                       uintptr_t i,
                                       double *out_x,
                                       double *out_u);

/**
 * Clamped linear interpolation of the solution at `x`.
 *
 * # Safety
 * `solution` must be a live handle; `out` must be writable.
 */
enum SublimStatus sublim_solution_eval(const struct SublimSolution *solution,
                                       double x,
                                       double *out);

/**
 * Destroy a solution handle. Null is ignored.
 *
 * # Safety
 * `solution` must come from [`sublim_gheat_solve`] and must not be used
 * afterwards.
 */
void sublim_solution_free(struct SublimSolution *solution);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUBLIM_H */
