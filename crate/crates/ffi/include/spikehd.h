#ifndef SPIKEHD_H
#define SPIKEHD_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpikehdStatus {
  SPIKEHD_STATUS_OK = 0,
  SPIKEHD_STATUS_NULL_POINTER = 1,
  SPIKEHD_STATUS_INVALID_ARGUMENT = 2,
  SPIKEHD_STATUS_SHAPE_MISMATCH = 3,
  SPIKEHD_STATUS_FORMAT = 4,
  SPIKEHD_STATUS_VERSION = 5,
  SPIKEHD_STATUS_IO = 6,
  SPIKEHD_STATUS_PHASE = 7,
  SPIKEHD_STATUS_NUMERIC = 8,
  SPIKEHD_STATUS_PANIC = 9,
} SpikehdStatus;

/**
 * An encoder basis.
 */
typedef struct SpikehdBasis SpikehdBasis;

/**
 * A trained model.
 */
typedef struct SpikehdModel SpikehdModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread, or null. Owned by the
 * library; valid until the next failing call on the same thread.
 */
const char *spikehd_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *spikehd_version(void);

/**
 * Loads a checkpoint written by `spikehd train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SpikehdStatus spikehd_model_load(const char *path, struct SpikehdModel **out);

/**
 * # Safety
 * `model` must come from [`spikehd_model_load`] and not be used again.
 */
void spikehd_model_free(struct SpikehdModel *model);

/**
 * Number of input spike channels the model expects.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum SpikehdStatus spikehd_model_input_dim(const struct SpikehdModel *model, size_t *out);

/**
 * Number of classes.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum SpikehdStatus spikehd_model_class_count(const struct SpikehdModel *model, size_t *out);

/**
 * Copies the class labels into `labels[0..len]`; `len` must equal the
 * class count.
 *
 * # Safety
 * `labels` must point to `len` writable `u32`s.
 */
enum SpikehdStatus spikehd_model_labels(const struct SpikehdModel *model,
                                        uint32_t *labels,
                                        size_t len);

/**
 * Classifies one spike train given row-major as `steps × channels` bytes,
 * non-zero meaning a spike.
 *
 * # Safety
 * `spikes` must point to `steps * channels` readable bytes; `label` must
 * be writable.
 */
enum SpikehdStatus spikehd_model_predict(const struct SpikehdModel *model,
                                         const uint8_t *spikes,
                                         size_t steps,
                                         size_t channels,
                                         uint32_t *label);

/**
 * Builds a `dim × input_dim` encoder basis from `seed`. `activation` is
 * a [`SpikehdActivation`] value.
 *
 * # Safety
 * `out` must be writable.
 */
enum SpikehdStatus spikehd_basis_new(size_t input_dim,
                                     size_t dim,
                                     uint32_t activation,
                                     uint64_t seed,
                                     double sigma,
                                     struct SpikehdBasis **out);

/**
 * # Safety
 * `basis` must come from [`spikehd_basis_new`] and not be used again.
 */
void spikehd_basis_free(struct SpikehdBasis *basis);

/**
 * Encodes `features[0..input_dim]` into `out[0..dim]`.
 *
 * # Safety
 * Buffers must hold the stated number of `f64`s.
 */
enum SpikehdStatus spikehd_basis_encode(const struct SpikehdBasis *basis,
                                        const double *features,
                                        size_t input_dim,
                                        double *out,
                                        size_t dim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPIKEHD_H */
