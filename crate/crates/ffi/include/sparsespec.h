#ifndef SPARSESPEC_H
#define SPARSESPEC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_POINTER = 1,
  SS_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed or inconsistent input data.
   */
  SS_STATUS_DATA = 3,
  SS_STATUS_IO = 4,
  /**
   * The estimator could not produce a result (too few peaks, singular fit).
   */
  SS_STATUS_ESTIMATION = 5,
  SS_STATUS_PANIC = 6,
} SsStatus;

typedef enum SsMethod {
  SS_METHOD_FOURIER = 0,
  SS_METHOD_LASSO = 1,
  SS_METHOD_SEMA = 2,
} SsMethod;

/**
 * Opaque list of estimated components.
 */
typedef struct SsComponents SsComponents;

/**
 * Opaque sampled signal.
 */
typedef struct SsSignal SsSignal;

/**
 * One damped 2D component.
 */
typedef struct SsComponent {
  double omega1;
  double omega2;
  double beta1;
  double beta2;
  double amp_re;
  double amp_im;
} SsComponent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len` bytes) and returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t ss_last_error(char *buf, size_t len);

/**
 * Static version string.
 */
const char *ss_version(void);

/**
 * Builds a signal from `n` samples at grid indices `(i1[k], i2[k])` and times
 * `(t1[k], t2[k])` inside an `n1 x n2` grid with spacings `dt1, dt2`.
 *
 * # Safety
 * Each array must be valid for `n` reads; `out` must be valid for a write.
 */
enum SsStatus ss_signal_new(size_t n,
                            const size_t *i1,
                            const size_t *i2,
                            const double *t1,
                            const double *t2,
                            const double *re,
                            const double *im,
                            size_t n1,
                            size_t n2,
                            double dt1,
                            double dt2,
                            struct SsSignal **out);

/**
 * Reads a samples CSV.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum SsStatus ss_signal_read(const char *path, struct SsSignal **out);

/**
 * Number of samples in `signal`, or 0 for a null handle.
 *
 * # Safety
 * `signal` must be null or a live handle.
 */
size_t ss_signal_len(const struct SsSignal *signal);

/**
 * # Safety
 * `signal` must be null or a handle not freed before.
 */
void ss_signal_free(struct SsSignal *signal);

/**
 * Estimates `k` components. `lambda` and the `p1 x p2` frequency dictionary
 * are used by the sparse methods only.
 *
 * # Safety
 * `signal` must be a live handle; `out` must be valid for a write.
 */
enum SsStatus ss_estimate(const struct SsSignal *signal,
                          enum SsMethod method,
                          size_t k,
                          double lambda,
                          size_t p1,
                          size_t p2,
                          struct SsComponents **out);

/**
 * Number of components, or 0 for a null handle.
 *
 * # Safety
 * `comps` must be null or a live handle.
 */
size_t ss_components_len(const struct SsComponents *comps);

/**
 * Copies component `index` into `out`.
 *
 * # Safety
 * `comps` must be a live handle; `out` must be valid for a write.
 */
enum SsStatus ss_components_get(const struct SsComponents *comps,
                                size_t index,
                                struct SsComponent *out);

/**
 * # Safety
 * `comps` must be null or a handle not freed before.
 */
void ss_components_free(struct SsComponents *comps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSESPEC_H */
