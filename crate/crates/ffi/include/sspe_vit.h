#ifndef SSPE_VIT_H
#define SSPE_VIT_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum SspeStatus {
  SSPE_STATUS_OK = 0,
  SSPE_STATUS_NULL_POINTER = 1,
  SSPE_STATUS_INVALID_ARGUMENT = 2,
  SSPE_STATUS_SHAPE = 3,
  SSPE_STATUS_IO = 4,
  SSPE_STATUS_CHECKPOINT = 5,
  SSPE_STATUS_NON_FINITE = 6,
  SSPE_STATUS_BUFFER_TOO_SMALL = 7,
  SSPE_STATUS_PANIC = 8,
} SspeStatus;

// Opaque trained or initialised encoder.
typedef struct SspeModel SspeModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *sspe_last_error(void);

// Static name of a status code.
const char *sspe_status_name(enum SspeStatus status);

// Randomly initialised model with the default geometry.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum SspeStatus sspe_model_init(uint64_t seed, struct SspeModel **out);

// Loads a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for one handle.
enum SspeStatus sspe_model_load(const char *path, struct SspeModel **out);

// Reads a checkpoint from memory.
//
// # Safety
// `data` must point to `len` readable bytes and `out` be valid for one handle.
enum SspeStatus sspe_model_from_bytes(const uint8_t *data, size_t len, struct SspeModel **out);

// Writes the model as a checkpoint file.
//
// # Safety
// `model` must come from this library and `path` be NUL-terminated.
enum SspeStatus sspe_model_save(const struct SspeModel *model, const char *path);

// Serialises the model into `buffer`. `written` always receives the
// required size, so a call with a null buffer queries it.
//
// # Safety
// `buffer` must be null or writable for `capacity` bytes; `written` must be valid.
enum SspeStatus sspe_model_to_bytes(const struct SspeModel *model,
                                    uint8_t *buffer,
                                    size_t capacity,
                                    size_t *written);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must be null or a handle from this library not yet freed.
void sspe_model_free(struct SspeModel *model);

// Image side and patch size in pixels, and the number of patch positions.
//
// # Safety
// All pointers must be valid.
enum SspeStatus sspe_model_geometry(const struct SspeModel *model,
                                    size_t *image_side,
                                    size_t *patch_pixels,
                                    size_t *positions);

// Logits `[KL-0, KL-2]` for a row-major grayscale image with values in
// `[0, 1]`. `plan` lists the 1-based position row of each token; pass null
// for the identity plan used at inference.
//
// # Safety
// `pixels` must hold `len` values, `plan` (if non-null) `plan_len` values,
// and `logits` must be writable for two values.
enum SspeStatus sspe_model_encode(const struct SspeModel *model,
                                  const double *pixels,
                                  size_t len,
                                  const size_t *plan,
                                  size_t plan_len,
                                  double *logits);

// Selective shuffle plan: key tokens keep their rows, the rest are
// permuted uniformly. Writes `positions` 1-based rows to `out`.
//
// # Safety
// `keys` must hold `key_count` values and `out` be writable for `out_len`.
enum SspeStatus sspe_make_plan(size_t positions,
                               const size_t *keys,
                               size_t key_count,
                               uint64_t seed,
                               size_t *out,
                               size_t out_len);

// Label of an exchanged sequence from its key-patch grades (0 = KL-0,
// 1 = KL-2): KL-0 only when every key patch is KL-0.
//
// # Safety
// `grades` must hold `count` values and `label` be valid.
enum SspeStatus sspe_exchange_label(const uint8_t *grades, size_t count, uint8_t *label);

// Smoothed target `one_hot * (1 - epsilon) + epsilon / 2`.
//
// # Safety
// `one_hot` must hold two values and `out` be writable for two.
enum SspeStatus sspe_smooth_labels(const double *one_hot, double epsilon, double *out);

// Cross-entropy of two-class probabilities against a one-hot target.
//
// # Safety
// `probs` and `one_hot` must hold two values; `out` must be valid.
enum SspeStatus sspe_ce_loss(const double *probs, const double *one_hot, double *out);

// Label-smoothing cross-entropy with smoothing `epsilon` in (0, 1).
//
// # Safety
// `probs` and `one_hot` must hold two values; `out` must be valid.
enum SspeStatus sspe_lsce_loss(const double *probs,
                               const double *one_hot,
                               double epsilon,
                               double *out);

// `alpha * LSCE` over mixed members plus `beta * CE` over full members.
// `probs` holds `2 * count` values; `labels` are grade codes; `mixed` is
// non-zero for mixed members. `sum_reduction` selects sums over means.
//
// # Safety
// Arrays must hold the stated number of values; `out` must be valid.
enum SspeStatus sspe_hybrid_loss(const double *probs,
                                 const uint8_t *labels,
                                 const uint8_t *mixed,
                                 size_t count,
                                 double epsilon,
                                 double alpha,
                                 double beta,
                                 bool sum_reduction,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSPE_VIT_H */
