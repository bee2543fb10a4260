#ifndef SOFTSEG_H
#define SOFTSEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_POINTER = 1,
  SS_STATUS_SHAPE_MISMATCH = 2,
  SS_STATUS_INVALID_ARGUMENT = 3,
  SS_STATUS_INVALID_VALUE = 4,
  /**
   * The quantity is undefined for these inputs (HD95 with one empty mask).
   */
  SS_STATUS_UNDEFINED = 5,
  SS_STATUS_BUFFER_TOO_SMALL = 6,
  SS_STATUS_INTERNAL = 7,
} SsStatus;

/**
 * Opaque annotation set handle.
 */
typedef struct SsAnnotationSet SsAnnotationSet;

/**
 * Opaque binary mask handle.
 */
typedef struct SsBinaryMask SsBinaryMask;

/**
 * Opaque soft mask handle.
 */
typedef struct SsSoftMask SsSoftMask;

/**
 * Squared GED of a deterministic prediction and its components.
 */
typedef struct SsGedReport {
  double d2_ged;
  double expected_distance;
  double diversity;
  double expected_dsc;
} SsGedReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *ss_last_error_message(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *ss_version(void);

/**
 * Create a binary mask from `width * height` row-major values, each 0 or 1.
 *
 * # Safety
 * `values` must point to `width * height` bytes and `out` must be writable.
 */
enum SsStatus ss_binary_mask_new(size_t width,
                                 size_t height,
                                 const uint8_t *values,
                                 struct SsBinaryMask **out_mask);

/**
 * # Safety
 * `mask` must be null or a handle from `ss_binary_mask_new`/`ss_threshold`
 * that has not been freed.
 */
void ss_binary_mask_free(struct SsBinaryMask *mask);

/**
 * Width and height of a binary mask.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SsStatus ss_binary_mask_shape(const struct SsBinaryMask *mask, size_t *width, size_t *height);

/**
 * Copy the mask's values into `buf`, which must hold at least `width * height` bytes.
 *
 * # Safety
 * `buf` must point to `len` writable bytes.
 */
enum SsStatus ss_binary_mask_values(const struct SsBinaryMask *mask, uint8_t *buf, size_t len);

/**
 * Create a soft mask from `width * height` row-major values in `[0, 1]`.
 *
 * # Safety
 * `values` must point to `width * height` doubles and `out` must be writable.
 */
enum SsStatus ss_soft_mask_new(size_t width,
                               size_t height,
                               const double *values,
                               struct SsSoftMask **out_mask);

/**
 * # Safety
 * `mask` must be null or a live soft mask handle.
 */
void ss_soft_mask_free(struct SsSoftMask *mask);

/**
 * # Safety
 * All pointers must be valid.
 */
enum SsStatus ss_soft_mask_shape(const struct SsSoftMask *mask, size_t *width, size_t *height);

/**
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum SsStatus ss_soft_mask_values(const struct SsSoftMask *mask, double *buf, size_t len);

/**
 * Collect `count` same-shape masks into an annotation set. The masks are
 * copied; the caller keeps ownership of the input handles.
 *
 * # Safety
 * `masks` must point to `count` live binary mask handles.
 */
enum SsStatus ss_annotation_set_new(const struct SsBinaryMask *const *masks_in,
                                    size_t count,
                                    struct SsAnnotationSet **out_set);

/**
 * # Safety
 * `set` must be null or a live annotation set handle.
 */
void ss_annotation_set_free(struct SsAnnotationSet *set);

/**
 * Number of annotations in the set; 0 for a null handle.
 *
 * # Safety
 * `set` must be null or a live handle.
 */
size_t ss_annotation_set_len(const struct SsAnnotationSet *set);

/**
 * Per-pixel mean of the annotations.
 *
 * # Safety
 * `set` must be a live handle and `out_mask` writable.
 */
enum SsStatus ss_fuse_mean(const struct SsAnnotationSet *set, struct SsSoftMask **out_mask);

/**
 * Per-pixel Bernoulli variance `m (1 - m)` written into `buf`.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum SsStatus ss_variance_map(const struct SsSoftMask *mask, double *buf, size_t len);

/**
 * Binarise with `p >= tau`, `tau` in (0, 1).
 *
 * # Safety
 * `mask` must be a live handle and `out_mask` writable.
 */
enum SsStatus ss_threshold(const struct SsSoftMask *mask,
                           double tau,
                           struct SsBinaryMask **out_mask);

/**
 * Dice similarity coefficient; 1 when both masks are empty.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SsStatus ss_dice(const struct SsBinaryMask *pred,
                      const struct SsBinaryMask *gt,
                      double *result);

/**
 * Intersection over union; 1 when both masks are empty.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SsStatus ss_iou(const struct SsBinaryMask *pred,
                     const struct SsBinaryMask *gt,
                     double *result);

/**
 * # Safety
 * All pointers must be valid.
 */
enum SsStatus ss_precision_recall(const struct SsBinaryMask *pred,
                                  const struct SsBinaryMask *gt,
                                  double *precision,
                                  double *recall);

/**
 * 95th-percentile Hausdorff distance in pixels. Returns `Undefined` when
 * exactly one mask is empty; 0 when both are.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SsStatus ss_hausdorff95(const struct SsBinaryMask *a,
                             const struct SsBinaryMask *b,
                             double *result);

/**
 * Squared GED of a deterministic prediction against the annotation set.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SsStatus ss_ged_deterministic(const struct SsAnnotationSet *set,
                                   const struct SsBinaryMask *pred,
                                   struct SsGedReport *report);

/**
 * Squared GED between two samples of masks.
 *
 * # Safety
 * `p` and `q` must point to `np` and `nq` live handles.
 */
enum SsStatus ss_ged_general(const struct SsBinaryMask *const *p,
                             size_t np,
                             const struct SsBinaryMask *const *q,
                             size_t nq,
                             double *result);

/**
 * Pixel-mean binary cross-entropy against a soft target. `grad` may be null;
 * otherwise it receives dLoss/dp.
 *
 * # Safety
 * `grad`, when non-null, must point to `grad_len` writable doubles.
 */
enum SsStatus ss_cross_entropy(const struct SsSoftMask *p,
                               const struct SsSoftMask *g,
                               double *loss,
                               double *grad,
                               size_t grad_len);

/**
 * Soft dice loss. `grad` may be null.
 *
 * # Safety
 * `grad`, when non-null, must point to `grad_len` writable doubles.
 */
enum SsStatus ss_dice_loss(const struct SsSoftMask *p,
                           const struct SsSoftMask *g,
                           double *loss,
                           double *grad,
                           size_t grad_len);

/**
 * Cosine-annealed learning rate at `step` of `total_steps`.
 *
 * # Safety
 * `result` must be writable.
 */
enum SsStatus ss_cosine_lr(double lr_start,
                           double lr_end,
                           size_t total_steps,
                           size_t step,
                           double *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOFTSEG_H */
