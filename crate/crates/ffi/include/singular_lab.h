#ifndef SINGULAR_LAB_H
#define SINGULAR_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum SlStatus {
  SL_STATUS_OK = 0,
  SL_STATUS_NULL_POINTER = 1,
  SL_STATUS_INVALID_ARGUMENT = 2,
  SL_STATUS_CONFIG_ERROR = 3,
  SL_STATUS_SOLVER_FAILURE = 4,
  SL_STATUS_CERTIFICATION_FAILURE = 5,
  SL_STATUS_BUFFER_TOO_SMALL = 6,
  SL_STATUS_PANIC = 7,
} SlStatus;

/**
 * Coefficient families.
 */
typedef enum SlCoefficientKind {
  SL_COEFFICIENT_KIND_IDENTITY = 0,
  /**
   * `A = c I`, parameter `c`.
   */
  SL_COEFFICIENT_KIND_SCALAR = 1,
  /**
   * `a11 = 1 + ε sin x₁`, parameter `ε`.
   */
  SL_COEFFICIENT_KIND_DIAGONAL_SINE = 2,
  /**
   * Rotated anisotropy, parameter `ε`.
   */
  SL_COEFFICIENT_KIND_ROTATION_MIX = 3,
} SlCoefficientKind;

/**
 * Coefficient field sampled on one domain.
 */
typedef struct SlCoefficients SlCoefficients;

/**
 * Grid over a smooth planar domain.
 */
typedef struct SlDomain SlDomain;

/**
 * Summary of a regularized solve.
 */
typedef struct SlSolveSummary {
  size_t levels;
  uint64_t final_n;
  double min_u;
  double max_u;
  double final_residual;
  bool monotone;
  bool positive;
} SlSolveSummary;

/**
 * Both variants of the smallness condition.
 */
typedef struct SlSmallness {
  double value_linear;
  double value_squared;
  double poincare_constant;
  bool pass_linear;
  bool pass_squared;
} SlSmallness;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sl_version(void);

/**
 * Copies the last error message of this thread into `buf`.
 *
 * Returns the message length without the terminator, or 0 when there is
 * none. A `buf` of `cap` bytes receives at most `cap - 1` bytes plus NUL.
 *
 * # Safety
 * `buf` must be null or valid for `cap` writable bytes.
 */
size_t sl_last_error_message(char *buf, size_t cap);

/**
 * Disk of the given radius centered at the origin.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum SlStatus sl_domain_new_disk(double radius, double h, struct SlDomain **out);

/**
 * Ellipse with semi-axes `a`, `b` centered at the origin.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum SlStatus sl_domain_new_ellipse(double a, double b, double h, struct SlDomain **out);

/**
 * # Safety
 * `domain` must be null or a handle from `sl_domain_new_*` not yet freed.
 */
void sl_domain_free(struct SlDomain *domain);

/**
 * Number of interior nodes, 0 for a null handle.
 *
 * # Safety
 * `domain` must be null or a live handle.
 */
size_t sl_domain_node_count(const struct SlDomain *domain);

/**
 * Grid spacing, NaN for a null handle.
 *
 * # Safety
 * `domain` must be null or a live handle.
 */
double sl_domain_spacing(const struct SlDomain *domain);

/**
 * Copies node coordinates and boundary distances. Any output may be null.
 *
 * # Safety
 * Each non-null output must be valid for `len` doubles.
 */
enum SlStatus sl_domain_nodes(const struct SlDomain *domain,
                              double *x,
                              double *y,
                              double *delta,
                              size_t len);

/**
 * Samples a coefficient family on `domain`. `param` is ignored for identity.
 *
 * # Safety
 * `domain` must be a live handle and `out` valid for one pointer write.
 */
enum SlStatus sl_coefficients_new(const struct SlDomain *domain,
                                  enum SlCoefficientKind kind,
                                  double param,
                                  struct SlCoefficients **out);

/**
 * # Safety
 * `coeff` must be null or a handle from `sl_coefficients_new` not yet freed.
 */
void sl_coefficients_free(struct SlCoefficients *coeff);

/**
 * Runs the regularized scheme for `-Pu = f/u^γ` with nodal data `f`.
 *
 * `schedule` may be null with `schedule_len == 0` for the default
 * `1, 2, 4, ..., 1024`. The limit is written to `u`; `summary` may be null.
 *
 * # Safety
 * `f` and `u` must be valid for `len` doubles, `schedule` for
 * `schedule_len` integers.
 */
enum SlStatus sl_solve(const struct SlDomain *domain,
                       const struct SlCoefficients *coeff,
                       double gamma,
                       const double *f,
                       size_t len,
                       const uint64_t *schedule,
                       size_t schedule_len,
                       double *u,
                       struct SlSolveSummary *summary);

/**
 * Smallness condition for exponent `gamma`.
 *
 * # Safety
 * Handles must be live and `out` valid for one write.
 */
enum SlStatus sl_smallness(const struct SlDomain *domain,
                           const struct SlCoefficients *coeff,
                           double gamma,
                           struct SlSmallness *out);

/**
 * Discrete Green function of `-P` with pole at node `source`, written to `out`.
 *
 * # Safety
 * Handles must be live and `out` valid for `len` doubles.
 */
enum SlStatus sl_green_column(const struct SlDomain *domain,
                              const struct SlCoefficients *coeff,
                              size_t source,
                              double *out,
                              size_t len);

/**
 * Runs an experiment config (TOML text) and writes its report into `out_dir`.
 *
 * Returns `CertificationFailure` when a requested diagnostic fails; the
 * report is written in that case too.
 *
 * # Safety
 * Both strings must be valid NUL-terminated UTF-8.
 */
enum SlStatus sl_run_config(const char *config_toml, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SINGULAR_LAB_H */
