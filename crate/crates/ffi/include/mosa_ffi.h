/* C interface to the mosa forecasting benchmark. Generated by cbindgen; do not edit. */

#ifndef MOSA_FFI_H
#define MOSA_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of an FFI call. Everything except `Ok` leaves a message behind
 * for [`mosa_last_error_message`].
 */
typedef enum MosaStatus {
  MOSA_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MOSA_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  MOSA_STATUS_INVALID_UTF8 = 2,
  /**
   * Configuration problem (mirrors the CLI's exit code 2 class).
   */
  MOSA_STATUS_CONFIG = 3,
  /**
   * File system failure.
   */
  MOSA_STATUS_IO = 4,
  /**
   * Unreadable or wrong-version checkpoint, dataset, or scenes file.
   */
  MOSA_STATUS_PARSE = 5,
  /**
   * Argument outside the accepted range (bad k, wrong buffer length).
   */
  MOSA_STATUS_INVALID_ARGUMENT = 6,
  /**
   * Lookup of a scene, parameter, or adapter target that does not exist.
   */
  MOSA_STATUS_NOT_FOUND = 7,
  /**
   * Numeric failure: shape mismatch, non-finite loss, unreachable goal.
   */
  MOSA_STATUS_NUMERIC = 8,
  /**
   * A panic crossed the boundary; the involved handles should be freed
   * and not used again.
   */
  MOSA_STATUS_INTERNAL = 9,
} MosaStatus;

/**
 * Opaque dataset handle (samples plus the scenes they reference).
 */
typedef struct MosaDataset MosaDataset;

/**
 * Opaque forecaster handle.
 */
typedef struct MosaModel MosaModel;

/**
 * Evaluation result, by value. Mirrors the core report field for field.
 */
typedef struct MosaEvalReport {
  size_t n_samples;
  size_t k;
  double ade;
  double fde;
  double topk_ade;
  double topk_fde;
} MosaEvalReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string. Never null; do not free.
 */
const char *mosa_version(void);

/**
 * Message from the calling thread's most recent failure, or an empty string
 * if nothing failed yet. Valid until the next failing call on this thread;
 * do not free.
 */
const char *mosa_last_error_message(void);

/**
 * Loads a checkpoint file into a new model handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_model` a valid pointer.
 * On `Ok` the caller owns the handle written to `*out_model` and must
 * release it with [`mosa_model_free`].
 */
enum MosaStatus mosa_model_load(const char *path, struct MosaModel **out_model);

/**
 * Releases a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must be null or a handle from this library that has not been
 * freed already.
 */
void mosa_model_free(struct MosaModel *model);

/**
 * Reports the model's input/output shape. Each out-pointer may be null if
 * the caller does not want that field.
 *
 * # Safety
 * `model` must be a live handle; non-null out-pointers must be writable.
 */
enum MosaStatus mosa_model_shape(const struct MosaModel *model,
                                 size_t *out_t_obs,
                                 size_t *out_t_pred,
                                 size_t *out_k_modes,
                                 size_t *out_d_model);

/**
 * Counts scalar parameters; with `trainable_only` set, only those currently
 * marked trainable.
 *
 * # Safety
 * `model` must be a live handle and `out_count` a valid pointer.
 */
enum MosaStatus mosa_model_param_count(const struct MosaModel *model,
                                       bool trainable_only,
                                       size_t *out_count);

/**
 * Folds all attached adapters into their base weights and returns the
 * merged model as a new handle. The input handle is left untouched.
 *
 * # Safety
 * `model` must be a live handle and `out_model` a valid pointer. On `Ok`
 * the caller owns the new handle.
 */
enum MosaStatus mosa_model_merge(const struct MosaModel *model, struct MosaModel **out_model);

/**
 * Loads a dataset file and the scenes file it references.
 *
 * # Safety
 * Both paths must be NUL-terminated strings and `out_dataset` a valid
 * pointer. On `Ok` the caller owns the handle and must release it with
 * [`mosa_dataset_free`].
 */
enum MosaStatus mosa_dataset_load(const char *data_path,
                                  const char *scenes_path,
                                  struct MosaDataset **out_dataset);

/**
 * Releases a dataset handle. Null is a no-op.
 *
 * # Safety
 * `dataset` must be null or a handle from this library that has not been
 * freed already.
 */
void mosa_dataset_free(struct MosaDataset *dataset);

/**
 * Reports the number of samples in the dataset.
 *
 * # Safety
 * `dataset` must be a live handle and `out_len` a valid pointer.
 */
enum MosaStatus mosa_dataset_len(const struct MosaDataset *dataset, size_t *out_len);

/**
 * Runs the displacement metrics of the model over the dataset. `k` is the
 * number of hypotheses scored by the Top-K metrics; pass 0 to use the
 * model's full mode count.
 *
 * # Safety
 * Both handles must be live and `out_report` a valid pointer.
 */
enum MosaStatus mosa_evaluate(const struct MosaModel *model,
                              const struct MosaDataset *dataset,
                              size_t k,
                              struct MosaEvalReport *out_report);

/**
 * Predicts one dataset sample. Writes `k_modes * t_pred * 2` doubles into
 * `out_xy`, mode-major: hypothesis 0 step 0 x, y, then step 1, and so on.
 * `out_len` must be exactly that product.
 *
 * # Safety
 * Both handles must be live and `out_xy` must point to `out_len` writable
 * doubles.
 */
enum MosaStatus mosa_predict(const struct MosaModel *model,
                             const struct MosaDataset *dataset,
                             size_t sample_index,
                             double *out_xy,
                             size_t out_len);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* MOSA_FFI_H */
