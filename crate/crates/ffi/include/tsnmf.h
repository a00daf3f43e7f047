#ifndef TSNMF_H
#define TSNMF_H

/* Generated by cbindgen from tsnmf-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible call.
 */
typedef enum TsnmfStatus {
  TsnmfStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  TsnmfStatus_NullArgument = 1,
  /**
   * A parameter was out of range (bad epsilon, bad k, bad dimensions).
   */
  TsnmfStatus_InvalidArgument = 2,
  /**
   * The data violates a requirement (zero column, too few directions).
   */
  TsnmfStatus_DataError = 3,
  /**
   * The solve failed numerically.
   */
  TsnmfStatus_NumericalError = 4,
  /**
   * An output buffer was too small.
   */
  TsnmfStatus_BufferTooSmall = 5,
  /**
   * An index was out of range.
   */
  TsnmfStatus_OutOfRange = 6,
  /**
   * The implementation panicked; state is unchanged.
   */
  TsnmfStatus_InternalError = 7,
} TsnmfStatus;

/**
 * Which step an iteration accepted: 0 refit, 1 dilation, 2 poll+,
 * 3 poll-, 4 all-rejected.
 */
typedef enum TsnmfStep {
  TsnmfStep_Refit = 0,
  TsnmfStep_Dilation = 1,
  TsnmfStep_PollPlus = 2,
  TsnmfStep_PollMinus = 3,
  TsnmfStep_Reject = 4,
} TsnmfStep;

/**
 * Opaque factorization result handle.
 */
typedef struct TsnmfResult TsnmfResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Run the factorization on a column-major n x m data matrix.
 *
 * On success writes a heap-allocated handle to `out`; release it with
 * [`tsnmf_result_free`].
 *
 * # Safety
 * `x` must point to `n * m` readable doubles and `out` to a writable
 * pointer slot.
 */
enum TsnmfStatus tsnmf_factorize(const double *x,
                                 size_t n,
                                 size_t m,
                                 size_t k,
                                 double epsilon,
                                 size_t i_max,
                                 uint64_t seed,
                                 struct TsnmfResult **out);

/**
 * Release a result handle. Null is a no-op.
 *
 * # Safety
 * `result` must be a pointer from [`tsnmf_factorize`] not yet freed.
 */
void tsnmf_result_free(struct TsnmfResult *result);

/**
 * Dimensions of the factorization: ambient n, templates k, data points m.
 *
 * # Safety
 * `result` must be a live handle; output pointers must be writable.
 */
enum TsnmfStatus tsnmf_result_dims(const struct TsnmfResult *result,
                                   size_t *n,
                                   size_t *k,
                                   size_t *m);

/**
 * Final squared Frobenius residual.
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum TsnmfStatus tsnmf_result_fit(const struct TsnmfResult *result, double *out);

/**
 * Residual of the initialization, before any search iteration.
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum TsnmfStatus tsnmf_result_initial_fit(const struct TsnmfResult *result, double *out);

/**
 * Geodesic spread of the final templates.
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum TsnmfStatus tsnmf_result_spread(const struct TsnmfResult *result, double *out);

/**
 * Hyper-area diagnostic of the final templates.
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum TsnmfStatus tsnmf_result_area(const struct TsnmfResult *result, double *out);

/**
 * Copy the templates W (column-major n x k) into `buffer`.
 *
 * # Safety
 * `result` must be a live handle; `buffer` must hold `len` writable
 * doubles.
 */
enum TsnmfStatus tsnmf_result_copy_templates(const struct TsnmfResult *result,
                                             double *buffer,
                                             size_t len);

/**
 * Copy the coefficients H (column-major k x m) into `buffer`.
 *
 * # Safety
 * `result` must be a live handle; `buffer` must hold `len` writable
 * doubles.
 */
enum TsnmfStatus tsnmf_result_copy_coefficients(const struct TsnmfResult *result,
                                                double *buffer,
                                                size_t len);

/**
 * Number of iteration trace records.
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum TsnmfStatus tsnmf_result_trace_len(const struct TsnmfResult *result, size_t *out);

/**
 * One trace record: the accepted step plus the post-update step size, fit
 * and spread.
 *
 * # Safety
 * `result` must be a live handle; output pointers must be writable.
 */
enum TsnmfStatus tsnmf_result_trace_entry(const struct TsnmfResult *result,
                                          size_t index,
                                          enum TsnmfStep *step,
                                          double *alpha,
                                          double *fit,
                                          double *spread);

/**
 * Deterministic per-member seed used by epsilon sweeps.
 */
uint64_t tsnmf_child_seed(uint64_t seed, size_t index);

/**
 * Message of the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *tsnmf_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSNMF_H */
