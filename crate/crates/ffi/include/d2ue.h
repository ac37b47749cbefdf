#ifndef D2UE_H
#define D2UE_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Scoring method of [`d2ue_ensemble_score`].
 */
typedef enum D2ueMethod {
  /**
   * Mean reconstruction error across learners.
   */
  D2UE_METHOD_ENS_RECON = 0,
  /**
   * Per-pixel deviation of reconstructions.
   */
  D2UE_METHOD_OUTPUT_UNC = 1,
  /**
   * Per-pixel deviation of input gradient times absolute residual.
   */
  D2UE_METHOD_DSU = 2,
} D2ueMethod;

/**
 * Pixel-to-image reduction of [`d2ue_ensemble_score`].
 */
typedef enum D2ueReduction {
  D2UE_REDUCTION_MEAN = 0,
  D2UE_REDUCTION_MAX = 1,
} D2ueReduction;

/**
 * Result code of every fallible call.
 */
typedef enum D2ueStatus {
  D2UE_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  D2UE_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  D2UE_STATUS_INVALID_UTF8 = 2,
  /**
   * Array sizes disagree with each other or with the model.
   */
  D2UE_STATUS_SHAPE = 3,
  /**
   * An argument or stored configuration is invalid.
   */
  D2UE_STATUS_CONFIG = 4,
  /**
   * Differentiation failed.
   */
  D2UE_STATUS_AUTODIFF = 5,
  /**
   * Training diverged.
   */
  D2UE_STATUS_TRAINING = 6,
  /**
   * A metric is undefined for the given labels.
   */
  D2UE_STATUS_METRIC = 7,
  /**
   * A file is malformed.
   */
  D2UE_STATUS_PARSE = 8,
  /**
   * A file could not be read.
   */
  D2UE_STATUS_IO = 9,
  /**
   * The library panicked; the handle involved should be freed.
   */
  D2UE_STATUS_PANIC = 10,
} D2ueStatus;

/**
 * Opaque trained ensemble.
 */
typedef struct D2ueEnsemble D2ueEnsemble;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none failed.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *d2ue_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *d2ue_version(void);

/**
 * Loads the ensemble directory written by `d2ue train`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be valid for one write.
 */
enum D2ueStatus d2ue_ensemble_load(const char *dir, struct D2ueEnsemble **out);

/**
 * Releases an ensemble. Null is ignored.
 *
 * # Safety
 * `ensemble` is null or a handle from [`d2ue_ensemble_load`] not yet freed.
 */
void d2ue_ensemble_free(struct D2ueEnsemble *ensemble);

/**
 * Number of learners; 0 for a null handle.
 *
 * # Safety
 * `ensemble` is null or a live handle.
 */
size_t d2ue_ensemble_len(const struct D2ueEnsemble *ensemble);

/**
 * Pixels per input image; 0 for a null handle.
 *
 * # Safety
 * `ensemble` is null or a live handle.
 */
size_t d2ue_ensemble_input_dim(const struct D2ueEnsemble *ensemble);

/**
 * Scores one `height × width` image (row-major pixels in [0, 1]).
 * Writes the image-level score to `out_score` and, when `out_map` is not
 * null, the per-pixel anomaly map (`height * width` values).
 *
 * # Safety
 * `ensemble` is a live handle; `pixels` and a non-null `out_map` are valid
 * for `height * width` elements; `out_score` is valid for one write.
 */
enum D2ueStatus d2ue_ensemble_score(const struct D2ueEnsemble *ensemble,
                                    const double *pixels,
                                    size_t height,
                                    size_t width,
                                    enum D2ueMethod method,
                                    enum D2ueReduction reduction,
                                    double *out_score,
                                    double *out_map);

/**
 * Linear CKA between row-major feature matrices `p` (`rows × p_cols`) and
 * `q` (`rows × q_cols`).
 *
 * # Safety
 * `p` and `q` are valid for their element counts; `out` for one write.
 */
enum D2ueStatus d2ue_cka(const double *p,
                         const double *q,
                         size_t rows,
                         size_t p_cols,
                         size_t q_cols,
                         double *out);

/**
 * Area under the ROC curve of `n` scores with 0/1 labels (1 = anomalous).
 *
 * # Safety
 * `scores` and `labels` are valid for `n` reads; `out` for one write.
 */
enum D2ueStatus d2ue_auroc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Average precision of `n` scores with 0/1 labels (1 = anomalous).
 *
 * # Safety
 * `scores` and `labels` are valid for `n` reads; `out` for one write.
 */
enum D2ueStatus d2ue_average_precision(const double *scores,
                                       const uint8_t *labels,
                                       size_t n,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* D2UE_H */
