#ifndef SIGN_H
#define SIGN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call.
 */
typedef enum SignStatus {
  SIGN_STATUS_OK = 0,
  SIGN_STATUS_NULL_POINTER = 1,
  SIGN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Invalid kernel, field or path length.
   */
  SIGN_STATUS_GAZE = 3,
  /**
   * Exact enumeration would exceed the path cap.
   */
  SIGN_STATUS_EXPLOSION_GUARD = 4,
  SIGN_STATUS_IO = 5,
  SIGN_STATUS_IMAGE = 6,
  SIGN_STATUS_MODEL = 7,
  /**
   * The output buffer is shorter than the result.
   */
  SIGN_STATUS_BUFFER_TOO_SMALL = 8,
  /**
   * A Rust panic was caught at the boundary.
   */
  SIGN_STATUS_PANIC = 9,
} SignStatus;

/**
 * An ensemble of trained gaze models sharing one config.
 */
typedef struct SignEnsemble SignEnsemble;

/**
 * A transition kernel over `N` regions with its IoR horizon.
 */
typedef struct SignKernel SignKernel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The last error message on this thread, or null if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *sign_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sign_version(void);

/**
 * Creates a kernel from an `n x n` row-major affinity matrix and an
 * initial distribution of length `n`. `ior_horizon` 0 means infinite.
 *
 * # Safety
 * `affinity` must hold `n * n` values, `initial` `n` values, and `out`
 * must be writable.
 */
enum SignStatus sign_kernel_new(const double *affinity,
                                const double *initial,
                                size_t n,
                                size_t ior_horizon,
                                struct SignKernel **out);

/**
 * Uniform affinities and initial distribution over `n` regions, infinite
 * IoR.
 *
 * # Safety
 * `out` must be writable.
 */
enum SignStatus sign_kernel_uniform(size_t n, struct SignKernel **out);

/**
 * Affinities and initial distribution proportional to `saliency`.
 *
 * # Safety
 * `saliency` must hold `n` values and `out` must be writable.
 */
enum SignStatus sign_kernel_saliency(const double *saliency,
                                     size_t n,
                                     size_t ior_horizon,
                                     struct SignKernel **out);

/**
 * Number of regions, or 0 for a null handle.
 *
 * # Safety
 * `kernel` must be null or a live handle.
 */
size_t sign_kernel_len(const struct SignKernel *kernel);

/**
 * Releases a kernel. Null is ignored.
 *
 * # Safety
 * `kernel` must be null or a handle not yet freed.
 */
void sign_kernel_free(struct SignKernel *kernel);

/**
 * Exact visit weights `w_j` by enumeration, written to `out` (length N).
 *
 * # Safety
 * `kernel` must be live and `out` must hold N values.
 */
enum SignStatus sign_enumerate_weights(const struct SignKernel *kernel,
                                       size_t max_len,
                                       double *out);

/**
 * Expected log gaze summed over every scan-path, with region
 * log-durations `mu` (length N) and gist log-duration `gist`.
 *
 * # Safety
 * `kernel` must be live, `mu` must hold N values, `out` must be writable.
 */
enum SignStatus sign_expected_log_gaze_pathsum(const struct SignKernel *kernel,
                                               const double *mu,
                                               size_t max_len,
                                               double gist,
                                               double *out);

/**
 * Expected log gaze from region weights: `gist + sum_j mu_j w_j`.
 *
 * # Safety
 * `mu` and `weights` must hold `n` values, `out` must be writable.
 */
enum SignStatus sign_expected_log_gaze_weighted(const double *mu,
                                                const double *weights,
                                                size_t n,
                                                double gist,
                                                double *out);

/**
 * Samples one scan-path into `path` (capacity `cap`), storing its length
 * and probability.
 *
 * # Safety
 * `kernel` must be live, `path` must hold `cap` values, `out_len` and
 * `out_prob` must be writable.
 */
enum SignStatus sign_sample_scanpath(const struct SignKernel *kernel,
                                     size_t max_len,
                                     uint64_t seed,
                                     size_t *path,
                                     size_t cap,
                                     size_t *out_len,
                                     double *out_prob);

/**
 * Monte-Carlo expected log gaze and its standard error.
 *
 * # Safety
 * `kernel` must be live, `mu` must hold N values, outputs writable.
 */
enum SignStatus sign_monte_carlo_log_gaze(const struct SignKernel *kernel,
                                          const double *mu,
                                          size_t max_len,
                                          size_t samples,
                                          uint64_t seed,
                                          double gist,
                                          double *out_mean,
                                          double *out_std_error);

/**
 * Monte-Carlo visit weights and per-region standard errors (length N).
 *
 * # Safety
 * `kernel` must be live; `out_weights` and `out_std_error` must hold N
 * values.
 */
enum SignStatus sign_monte_carlo_weights(const struct SignKernel *kernel,
                                         size_t max_len,
                                         size_t samples,
                                         uint64_t seed,
                                         double *out_weights,
                                         double *out_std_error);

/**
 * Loads every `*.ckpt` (with its `.cfg` sidecar) in `dir`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` writable.
 */
enum SignStatus sign_ensemble_load_dir(const char *dir, struct SignEnsemble **out);

/**
 * Loads the checkpoints listed in `paths`.
 *
 * # Safety
 * `paths` must hold `count` NUL-terminated strings and `out` be writable.
 */
enum SignStatus sign_ensemble_load(const char *const *paths,
                                   size_t count,
                                   struct SignEnsemble **out);

/**
 * Number of models in the ensemble, or 0 for a null handle.
 *
 * # Safety
 * `ensemble` must be null or live.
 */
size_t sign_ensemble_size(const struct SignEnsemble *ensemble);

/**
 * Number of regions in the ensemble's patch grid, or 0 for null.
 *
 * # Safety
 * `ensemble` must be null or live.
 */
size_t sign_ensemble_regions(const struct SignEnsemble *ensemble);

/**
 * Releases an ensemble. Null is ignored.
 *
 * # Safety
 * `ensemble` must be null or a handle not yet freed.
 */
void sign_ensemble_free(struct SignEnsemble *ensemble);

/**
 * Ensemble log gaze (mean of member log predictions) for an image file,
 * with an optional context image (`context` may be null).
 *
 * # Safety
 * `ensemble` must be live, `image` (and `context` when non-null) must be
 * NUL-terminated, `out` writable.
 */
enum SignStatus sign_ensemble_predict_file(const struct SignEnsemble *ensemble,
                                           const char *image,
                                           const char *context,
                                           double *out_log_gaze);

/**
 * Ensemble log gaze for interleaved 8-bit pixels (1 or 3 channels).
 *
 * # Safety
 * `ensemble` must be live, `pixels` must hold `height * width * channels`
 * bytes, `out` writable.
 */
enum SignStatus sign_ensemble_predict_pixels(const struct SignEnsemble *ensemble,
                                             const uint8_t *pixels,
                                             size_t height,
                                             size_t width,
                                             size_t channels,
                                             double *out_log_gaze);

/**
 * Inferred gaze pattern (weights normalized to sum to one) for an image
 * file, written to `out` of capacity `cap`; `out_len` receives the region
 * count.
 *
 * # Safety
 * `ensemble` must be live, `image` NUL-terminated, `context` null or
 * NUL-terminated, `out` must hold `cap` values, `out_len` writable.
 */
enum SignStatus sign_ensemble_pattern_file(const struct SignEnsemble *ensemble,
                                           const char *image,
                                           const char *context,
                                           double *out,
                                           size_t cap,
                                           size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIGN_H */
