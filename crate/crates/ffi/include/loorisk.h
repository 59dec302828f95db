#ifndef LOORISK_H
#define LOORISK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LrStatus {
  LR_STATUS_OK = 0,
  LR_STATUS_NULL_POINTER = 1,
  LR_STATUS_INVALID_ARGUMENT = 2,
  LR_STATUS_DIMENSION = 3,
  LR_STATUS_NOT_CONVERGED = 4,
  LR_STATUS_NUMERICAL = 5,
  LR_STATUS_BUFFER_TOO_SMALL = 6,
  LR_STATUS_PANIC = 7,
} LrStatus;

typedef enum LrLoss {
  LR_LOSS_SQUARED = 0,
  LR_LOSS_LOGISTIC = 1,
  /**
   * Parameter: the Huber scale.
   */
  LR_LOSS_PSEUDO_HUBER = 2,
  /**
   * Parameter: the smoothing scale.
   */
  LR_LOSS_SMOOTHED_ABS = 3,
  LR_LOSS_POISSON_SOFT_RECT = 4,
  /**
   * Parameter: the shape.
   */
  LR_LOSS_NEGATIVE_BINOMIAL = 5,
} LrLoss;

typedef enum LrRegularizer {
  LR_REGULARIZER_RIDGE = 0,
  /**
   * Parameters: mix and sharpness.
   */
  LR_REGULARIZER_SMOOTHED_ELASTIC_NET = 1,
  LR_REGULARIZER_L1 = 2,
  /**
   * Parameter: mix.
   */
  LR_REGULARIZER_ELASTIC_NET = 3,
} LrRegularizer;

typedef enum LrErrorFn {
  LR_ERROR_FN_SAME_AS_LOSS = 0,
  LR_ERROR_FN_SQUARED_ERROR = 1,
} LrErrorFn;

/**
 * Opaque dataset.
 */
typedef struct LrDataset LrDataset;

/**
 * Opaque fit result.
 */
typedef struct LrFit LrFit;

/**
 * Opaque model specification.
 */
typedef struct LrModel LrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL;
 * 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t lr_last_error_message(char *buf, size_t len);

/**
 * Creates a dataset from a row-major `n × p` design and `n` responses.
 *
 * # Safety
 * `x` must point to `n * p` doubles, `y` to `n` doubles and `out` to a
 * writable pointer.
 */
enum LrStatus lr_dataset_new(const double *x,
                             size_t n,
                             size_t p,
                             const double *y,
                             struct LrDataset **out);

/**
 * # Safety
 * `d` must come from [`lr_dataset_new`] and not be used afterwards.
 */
void lr_dataset_free(struct LrDataset *d);

/**
 * Builds a model. `loss_param` is read by losses with a parameter;
 * `mix` and `sharpness` by the regularizers that take them.
 *
 * # Safety
 * `out` must point to a writable pointer.
 */
enum LrStatus lr_model_new(enum LrLoss loss,
                           double loss_param,
                           enum LrRegularizer reg,
                           double mix,
                           double sharpness,
                           double lambda,
                           enum LrErrorFn phi,
                           struct LrModel **out);

/**
 * # Safety
 * `m` must come from [`lr_model_new`] and not be used afterwards.
 */
void lr_model_free(struct LrModel *m);

/**
 * Fits the model. `tol <= 0` selects the default tolerance. A fit that
 * stops without converging is still returned, with status
 * `NotConverged`.
 *
 * # Safety
 * Handles must be live; `out` must point to a writable pointer.
 */
enum LrStatus lr_fit(const struct LrDataset *data,
                     const struct LrModel *model,
                     double tol,
                     struct LrFit **out);

/**
 * # Safety
 * `f` must come from [`lr_fit`] and not be used afterwards.
 */
void lr_fit_free(struct LrFit *f);

/**
 * Number of coefficients in the fit, or 0 for a null handle.
 *
 * # Safety
 * `f` must be null or live.
 */
size_t lr_fit_dim(const struct LrFit *f);

/**
 * Copies the coefficients into `buf`, which must hold `lr_fit_dim` values.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum LrStatus lr_fit_coefficients(const struct LrFit *f, double *buf, size_t len);

/**
 * Objective value and convergence flag of a fit.
 *
 * # Safety
 * Pointers must be live or writable; `objective` and `converged` may be null.
 */
enum LrStatus lr_fit_summary(const struct LrFit *f, double *objective, bool *converged);

/**
 * Exact leave-one-out estimate. `per_sample` may be null; otherwise it
 * receives `n` values.
 *
 * # Safety
 * Handles must be live; buffers must be writable for the stated lengths.
 */
enum LrStatus lr_lo(const struct LrDataset *data,
                    const struct LrModel *model,
                    double tol,
                    double *estimate,
                    double *per_sample,
                    size_t len);

/**
 * Approximate leave-one-out estimate from a fresh full fit. Entries at
 * the `H_ii → 1` pole are `+inf` and excluded from `estimate`.
 *
 * # Safety
 * As [`lr_lo`].
 */
enum LrStatus lr_alo(const struct LrDataset *data,
                     const struct LrModel *model,
                     double tol,
                     double *estimate,
                     double *per_sample,
                     size_t len);

/**
 * K-fold cross validation with a seeded partition.
 *
 * # Safety
 * As [`lr_lo`].
 */
enum LrStatus lr_kfold(const struct LrDataset *data,
                       const struct LrModel *model,
                       size_t k,
                       uint64_t seed,
                       double tol,
                       double *estimate,
                       double *per_sample,
                       size_t len);

/**
 * `(c0 c1 ρ √δ / ν)²`
 */
double lr_bound_cb(double c0, double c1, double rho, double delta, double nu);

/**
 * Variance constant for ridge logistic regression. At `(1, 1, 0.1)` this
 * returns 6511.52; the commonly quoted value there is 6311.52.
 */
double lr_bound_cv_logistic(double rho, double delta, double lambda);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lr_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOORISK_H */
