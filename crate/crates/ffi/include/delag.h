#ifndef DELAG_H
#define DELAG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum DelagStatus {
  DELAG_STATUS_OK = 0,
  DELAG_STATUS_NULL_POINTER = 1,
  DELAG_STATUS_INVALID_ARGUMENT = 2,
  DELAG_STATUS_IO = 3,
  DELAG_STATUS_FORMAT = 4,
  DELAG_STATUS_VALIDATION = 5,
  DELAG_STATUS_CONFIG = 6,
  DELAG_STATUS_DOMAIN = 7,
  DELAG_STATUS_INSUFFICIENT_DATA = 8,
  DELAG_STATUS_NUMERIC = 9,
  DELAG_STATUS_PANIC = 10,
} DelagStatus;

/**
 * Per-pixel layers of a reconstructed day.
 */
typedef enum DelagLayer {
  DELAG_LAYER_MEAN = 0,
  DELAG_LAYER_LOWER = 1,
  DELAG_LAYER_UPPER = 2,
  DELAG_LAYER_VAR_ATC = 3,
  DELAG_LAYER_VAR_GP = 4,
  /**
   * NaN where the pixel was not observed.
   */
  DELAG_LAYER_OBSERVED = 5,
  /**
   * Observations where present, model mean elsewhere.
   */
  DELAG_LAYER_SEAMLESS = 6,
} DelagLayer;

/**
 * Scene stack with its ERA5 series and static features.
 */
typedef struct DelagDataset DelagDataset;

/**
 * One reconstructed day.
 */
typedef struct DelagDay DelagDay;

/**
 * Fitted cycle ensemble and per-day residual models.
 */
typedef struct DelagModel DelagModel;

typedef struct DelagMetrics {
  double mae;
  double rmse;
  /**
   * NaN when the truth has no variance.
   */
  double r2;
  double bias;
  /**
   * NaN when no intervals were given.
   */
  double cov95;
  size_t n;
} DelagMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *delag_version(void);

/**
 * Length in bytes of the last error message on this thread, without the
 * terminating NUL. Zero when the last call succeeded.
 */
size_t delag_last_error_length(void);

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to
 * fit). Returns the number of bytes written without the NUL, or -1 if
 * `buf` is null or `len` is zero.
 *
 * # Safety
 * `buf` must point to at least `len` writable bytes.
 */
int delag_last_error_message(char *buf, size_t len);

/**
 * Ratio of swept width to parallel length at `latitude_deg`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DelagStatus delag_crosstrack_ratio(double latitude_deg, double *out);

/**
 * Fraction of the parallel imaged twice per cycle.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DelagStatus delag_overlap_fraction(double latitude_deg, double *out);

/**
 * Loads a dataset from three container files.
 *
 * # Safety
 * Paths must be NUL-terminated strings; `out` must be a valid pointer.
 */
enum DelagStatus delag_dataset_load(const char *stack_path,
                                    const char *era5_path,
                                    const char *features_path,
                                    struct DelagDataset **out);

/**
 * Generates a synthetic dataset with default settings on a
 * `height` x `width` grid.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DelagStatus delag_dataset_generate(size_t height,
                                        size_t width,
                                        uint64_t seed,
                                        struct DelagDataset **out);

/**
 * Number of scenes and grid size.
 *
 * # Safety
 * `ds` must be a live handle; outputs must be valid pointers.
 */
enum DelagStatus delag_dataset_shape(const struct DelagDataset *ds,
                                     size_t *n_days,
                                     size_t *height,
                                     size_t *width);

/**
 * Copies the acquisition days (day of year) into `buf`.
 *
 * # Safety
 * `ds` must be a live handle; `buf` must hold `len` values.
 */
enum DelagStatus delag_dataset_days(const struct DelagDataset *ds, uint16_t *buf, size_t len);

/**
 * # Safety
 * `ds` must be null or a handle from this library not yet freed.
 */
void delag_dataset_free(struct DelagDataset *ds);

/**
 * Fits the cycle ensemble and residual models. `config_json` holds
 * pipeline settings (`fit`, `gp`, `recon` objects) and may be null for
 * defaults.
 *
 * # Safety
 * `ds` must be a live handle; `config_json` null or NUL-terminated;
 * `out` a valid pointer.
 */
enum DelagStatus delag_model_train(const struct DelagDataset *ds,
                                   const char *config_json,
                                   uint64_t seed,
                                   struct DelagModel **out);

/**
 * # Safety
 * `m` must be null or a handle from this library not yet freed.
 */
void delag_model_free(struct DelagModel *m);

/**
 * Reconstructs day of year `day` (1..=365) on the dataset grid.
 *
 * # Safety
 * Handles must be live; `out` a valid pointer.
 */
enum DelagStatus delag_reconstruct_day(const struct DelagModel *model,
                                       const struct DelagDataset *ds,
                                       uint16_t day,
                                       struct DelagDay **out);

/**
 * Number of pixels in each layer of `day`; zero for a null handle.
 *
 * # Safety
 * `day` must be null or a live handle.
 */
size_t delag_day_len(const struct DelagDay *day);

/**
 * Copies one layer into `buf`, which must hold exactly
 * `delag_day_len(day)` values.
 *
 * # Safety
 * `day` must be a live handle; `buf` must hold `len` values.
 */
enum DelagStatus delag_day_layer(const struct DelagDay *day,
                                 enum DelagLayer layer,
                                 double *buf,
                                 size_t len);

/**
 * # Safety
 * `day` must be null or a handle from this library not yet freed.
 */
void delag_day_free(struct DelagDay *day);

/**
 * Error statistics of `pred` against `truth`. `lower` and `upper` may
 * both be null; otherwise coverage of the intervals is reported too.
 *
 * # Safety
 * Non-null arrays must hold `n` values; `out` must be a valid pointer.
 */
enum DelagStatus delag_metrics(const double *pred,
                               const double *truth,
                               const double *lower,
                               const double *upper,
                               size_t n,
                               struct DelagMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DELAG_H */
