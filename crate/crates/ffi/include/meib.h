#ifndef MEIB_H
#define MEIB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum MeibStatus {
  MEIB_STATUS_OK = 0,
  MEIB_STATUS_NULL_POINTER = 1,
  MEIB_STATUS_INVALID_ARGUMENT = 2,
  MEIB_STATUS_DIMENSION_MISMATCH = 3,
  MEIB_STATUS_NUMERIC = 4,
  MEIB_STATUS_IO = 5,
  MEIB_STATUS_PARSE = 6,
  MEIB_STATUS_CHECKPOINT = 7,
  MEIB_STATUS_BUFFER_TOO_SMALL = 8,
  MEIB_STATUS_INTERNAL = 9,
} MeibStatus;

/**
 * Aligned views plus labels.
 */
typedef struct MeibDatasetHandle MeibDatasetHandle;

/**
 * Trained or freshly initialized model.
 */
typedef struct MeibModelHandle MeibModelHandle;

/**
 * Kernel settings for the entropy functions.
 */
typedef struct MeibKernelConfig {
  double alpha;
  size_t k_nn;
  double sigma_floor;
} MeibKernelConfig;

/**
 * Synthetic two-view data settings.
 */
typedef struct MeibSynthConfig {
  size_t samples_per_class;
  size_t latent_dim;
  size_t extra_dim;
  double noise_factor;
  uint64_t seed;
  double train_fraction;
  /**
   * Nonzero: the noise level is a variance. Zero: a standard deviation.
   */
  int32_t noise_is_variance;
} MeibSynthConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *meib_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *meib_version(void);

/**
 * alpha = 1.01, k_nn = 10, sigma_floor = 1e-6.
 */
struct MeibKernelConfig meib_kernel_config_default(void);

/**
 * 500 samples per class, latent 20, extra 5, no noise, seed 0, 80% train.
 */
struct MeibSynthConfig meib_synth_config_default(void);

/**
 * Kernel width from the k-nearest-neighbour heuristic.
 *
 * # Safety
 * `data` must hold `rows * cols` doubles; `out_sigma` must be writable.
 */
enum MeibStatus meib_estimate_sigma(const double *data,
                                    size_t rows,
                                    size_t cols,
                                    size_t k_nn,
                                    double sigma_floor,
                                    double *out_sigma);

/**
 * Rényi entropy in bits of an `n x n` symmetric PSD matrix with unit trace.
 *
 * # Safety
 * `matrix` must hold `n * n` doubles; `out_bits` must be writable.
 */
enum MeibStatus meib_matrix_entropy(const double *matrix, size_t n, double alpha, double *out_bits);

/**
 * Entropy in bits of a sample batch under a Gaussian kernel of width
 * `sigma`, or of the heuristic width when `sigma <= 0`.
 *
 * # Safety
 * `data` must hold `rows * cols` doubles; `out_bits` must be writable.
 */
enum MeibStatus meib_batch_entropy(const double *data,
                                   size_t rows,
                                   size_t cols,
                                   double sigma,
                                   struct MeibKernelConfig config,
                                   double *out_bits);

/**
 * `I(X;Z)` in bits for aligned batches `x` (`rows x x_cols`) and `z`
 * (`rows x z_cols`), widths from the heuristic.
 *
 * # Safety
 * Input arrays must match their shapes; `out_bits` must be writable.
 */
enum MeibStatus meib_mutual_information(const double *x,
                                        size_t x_cols,
                                        const double *z,
                                        size_t z_cols,
                                        size_t rows,
                                        struct MeibKernelConfig config,
                                        double *out_bits);

/**
 * `∂I(X;Z)/∂z`, written row-major into `out_grad` (`rows * z_cols`).
 *
 * # Safety
 * Input arrays must match their shapes; `out_grad` must hold
 * `rows * z_cols` doubles.
 */
enum MeibStatus meib_mi_gradient(const double *x,
                                 size_t x_cols,
                                 const double *z,
                                 size_t z_cols,
                                 size_t rows,
                                 struct MeibKernelConfig config,
                                 double *out_grad);

/**
 * Generates synthetic data; both output handles must be freed.
 *
 * # Safety
 * `out_train` and `out_test` must be writable.
 */
enum MeibStatus meib_synth_generate(struct MeibSynthConfig config,
                                    struct MeibDatasetHandle **out_train,
                                    struct MeibDatasetHandle **out_test);

/**
 * Builds a dataset from `num_views` row-major arrays; view `i` has
 * `rows x view_dims[i]` entries.
 *
 * # Safety
 * `views` must hold `num_views` pointers, each to a matching array;
 * `view_dims` must hold `num_views` entries; `labels` must hold `rows`.
 */
enum MeibStatus meib_dataset_from_arrays(const double *const *views,
                                         const size_t *view_dims,
                                         size_t num_views,
                                         const size_t *labels,
                                         size_t rows,
                                         struct MeibDatasetHandle **out);

/**
 * Loads aligned CSV views. `label_column` names the label column of the
 * first file (NULL means "label").
 *
 * # Safety
 * `paths` must hold `num_paths` NUL-terminated strings.
 */
enum MeibStatus meib_dataset_load_csv(const char *const *paths,
                                      size_t num_paths,
                                      const char *label_column,
                                      char delimiter,
                                      int32_t has_header,
                                      struct MeibDatasetHandle **out);

/**
 * # Safety
 * `dataset` must be NULL or a handle from this library, freed at most once.
 */
void meib_dataset_free(struct MeibDatasetHandle *dataset);

/**
 * # Safety
 * `dataset` must be a live handle; out-pointers must be writable.
 */
enum MeibStatus meib_dataset_shape(const struct MeibDatasetHandle *dataset,
                                   size_t *out_rows,
                                   size_t *out_views);

/**
 * Copies view `view` (0-based) into `out`, which holds `capacity` doubles;
 * `out_cols` receives the view width. With `out == NULL` only the width is
 * reported.
 *
 * # Safety
 * `dataset` must be a live handle; `out` must be NULL or hold `capacity`
 * doubles; `out_cols` must be writable.
 */
enum MeibStatus meib_dataset_copy_view(const struct MeibDatasetHandle *dataset,
                                       size_t view,
                                       double *out,
                                       size_t capacity,
                                       size_t *out_cols);

/**
 * # Safety
 * `dataset` must be a live handle; `out` must hold `capacity` entries.
 */
enum MeibStatus meib_dataset_copy_labels(const struct MeibDatasetHandle *dataset,
                                         size_t *out,
                                         size_t capacity);

/**
 * Creates a model from a JSON model spec, e.g.
 * `{"view_dims":[25,25],"encoder_layers":[[64],[64]],"fusion_layers":[32],
 *   "num_classes":2,"betas":[0.001,0.001]}`.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string; `out` must be writable.
 */
enum MeibStatus meib_model_new(const char *spec_json, uint64_t seed, struct MeibModelHandle **out);

/**
 * # Safety
 * `model` must be NULL or a handle from this library, freed at most once.
 */
void meib_model_free(struct MeibModelHandle *model);

/**
 * Trains in place. `train_json` is a training config such as
 * `{"learning_rate":0.01,"epochs":20,"batch_size":50}`; NULL uses defaults.
 * `out_epochs` (nullable) receives the number of epochs run and
 * `out_final_loss` (nullable) the last epoch's mean loss.
 *
 * # Safety
 * Handles must be live; strings NUL-terminated; out-pointers NULL or
 * writable.
 */
enum MeibStatus meib_model_train(struct MeibModelHandle *model,
                                 const struct MeibDatasetHandle *dataset,
                                 const char *train_json,
                                 size_t *out_epochs,
                                 double *out_final_loss);

/**
 * Classification error on a dataset.
 *
 * # Safety
 * Handles must be live; `out_error` writable.
 */
enum MeibStatus meib_model_evaluate(const struct MeibModelHandle *model,
                                    const struct MeibDatasetHandle *dataset,
                                    double *out_error);

/**
 * Mean per-view `I(X_i;Z_i)` in bits over chunks of `chunk` rows; writes
 * one value per view into `out` (`capacity` entries).
 *
 * # Safety
 * Handles must be live; `out` must hold `capacity` doubles.
 */
enum MeibStatus meib_model_view_information(const struct MeibModelHandle *model,
                                            const struct MeibDatasetHandle *dataset,
                                            size_t chunk,
                                            double *out,
                                            size_t capacity);

/**
 * ℓ₂ norms of the input columns of encoder `view`'s first layer.
 * `out_len` receives the count; with `out == NULL` only the count is set.
 *
 * # Safety
 * `model` must be live; `out` NULL or holding `capacity` doubles; `out_len`
 * writable.
 */
enum MeibStatus meib_model_input_weight_norms(const struct MeibModelHandle *model,
                                              size_t view,
                                              double *out,
                                              size_t capacity,
                                              size_t *out_len);

/**
 * # Safety
 * `model` must be live; `path` NUL-terminated.
 */
enum MeibStatus meib_model_save(const struct MeibModelHandle *model, const char *path);

/**
 * # Safety
 * `path` NUL-terminated; `out` writable.
 */
enum MeibStatus meib_model_load(const char *path, struct MeibModelHandle **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEIB_H */
