/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef PRPL_H
#define PRPL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PrplStatus {
  PRPL_STATUS_OK = 0,
  PRPL_STATUS_NULL_POINTER = 1,
  PRPL_STATUS_INVALID_ARGUMENT = 2,
  PRPL_STATUS_EMPTY = 3,
  PRPL_STATUS_DOMAIN = 4,
  PRPL_STATUS_PAYLOAD_TOO_LARGE = 5,
  PRPL_STATUS_SNAPSHOT = 6,
  PRPL_STATUS_IO = 7,
  PRPL_STATUS_BUFFER_TOO_SMALL = 8,
  PRPL_STATUS_PANIC = 9,
} PrplStatus;

/**
 * Values of `PrplSchemeConfig::kind`; equal to the snapshot scheme tags.
 */
typedef enum PrplSchemeKind {
  PRPL_SCHEME_KIND_UNIFORM = 0,
  PRPL_SCHEME_KIND_PER = 1,
  PRPL_SCHEME_KIND_LAP = 2,
} PrplSchemeKind;

/**
 * Values of `PrplLossSpec::kind`.
 */
typedef enum PrplLossKind {
  PRPL_LOSS_KIND_L1 = 0,
  PRPL_LOSS_KIND_MSE = 1,
  PRPL_LOSS_KIND_HUBER = 2,
  PRPL_LOSS_KIND_PAL = 3,
  PRPL_LOSS_KIND_PER_TAU = 4,
} PrplLossKind;

/**
 * Opaque buffer handle.
 */
typedef struct PrplBuffer PrplBuffer;

typedef struct PrplSchemeConfig {
  uint32_t kind;
  double alpha;
  double beta;
  double epsilon;
  double kappa;
} PrplSchemeConfig;

typedef struct PrplLossSpec {
  uint32_t kind;
  double kappa;
  double alpha;
  double tau;
  double beta;
} PrplLossSpec;

typedef struct PrplDatasetStats {
  double lambda;
  double eta;
  size_t n;
} PrplDatasetStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * NUL-terminated crate version. Static storage.
 */
const char *prpl_version(void);

/**
 * Message of the last failed call on this thread, or an empty string. Valid
 * until the next failing call on the same thread.
 */
const char *prpl_last_error(void);

/**
 * Default parameters for scheme `kind`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum PrplStatus prpl_scheme_default(uint32_t kind, struct PrplSchemeConfig *out);

/**
 * # Safety
 * `scheme` must point to a valid config and `out` be valid for writes.
 */
enum PrplStatus prpl_buffer_new(size_t capacity,
                                const struct PrplSchemeConfig *scheme,
                                size_t max_payload,
                                struct PrplBuffer **out);

/**
 * Releases a buffer. Null is ignored.
 *
 * # Safety
 * `buf` must come from this library and not be used afterwards.
 */
void prpl_buffer_free(struct PrplBuffer *buf);

/**
 * # Safety
 * `buf` must be a live handle, `out` valid for writes.
 */
enum PrplStatus prpl_buffer_len(const struct PrplBuffer *buf, size_t *out);

/**
 * # Safety
 * `buf` must be a live handle, `out` valid for writes.
 */
enum PrplStatus prpl_buffer_capacity(const struct PrplBuffer *buf, size_t *out);

/**
 * Copies `len` bytes into the next slot; the slot id goes to `out_slot`.
 *
 * # Safety
 * `data` must be readable for `len` bytes (may be null if `len` is 0).
 */
enum PrplStatus prpl_buffer_add(struct PrplBuffer *buf,
                                const uint8_t *data,
                                size_t len,
                                size_t *out_slot);

/**
 * Borrowed view of a slot's payload, valid until the slot is overwritten
 * or the buffer freed.
 *
 * # Safety
 * `buf` must be a live handle, outputs valid for writes.
 */
enum PrplStatus prpl_buffer_payload(const struct PrplBuffer *buf,
                                    size_t slot,
                                    const uint8_t **out_data,
                                    size_t *out_len);

/**
 * Draws `batch` slots using a generator seeded with `seed`. Each output
 * array must hold `batch` elements.
 *
 * # Safety
 * Output pointers must be valid for `batch` writes.
 */
enum PrplStatus prpl_buffer_sample(struct PrplBuffer *buf,
                                   size_t batch,
                                   uint64_t seed,
                                   size_t *out_indices,
                                   double *out_probabilities,
                                   double *out_is_weights);

/**
 * # Safety
 * `slots` and `abs_deltas` must be readable for `n` elements.
 */
enum PrplStatus prpl_buffer_update_priorities(struct PrplBuffer *buf,
                                              const size_t *slots,
                                              const double *abs_deltas,
                                              size_t n);

/**
 * Serialises the buffer. With `out` null or `cap` too small, only the
 * required size is stored in `out_len` and `BufferTooSmall` is returned.
 *
 * # Safety
 * `out` must be writable for `cap` bytes when non-null.
 */
enum PrplStatus prpl_buffer_to_bytes(const struct PrplBuffer *buf,
                                     uint8_t *out,
                                     size_t cap,
                                     size_t *out_len);

/**
 * # Safety
 * `data` must be readable for `len` bytes, `out` valid for writes.
 */
enum PrplStatus prpl_buffer_from_bytes(const uint8_t *data,
                                       size_t len,
                                       size_t max_payload,
                                       struct PrplBuffer **out);

/**
 * # Safety
 * `file` must be a NUL-terminated UTF-8 path.
 */
enum PrplStatus prpl_buffer_save(const struct PrplBuffer *buf, const char *file);

/**
 * # Safety
 * `file` must be a NUL-terminated UTF-8 path, `out` valid for writes.
 */
enum PrplStatus prpl_buffer_load(const char *file, size_t max_payload, struct PrplBuffer **out);

/**
 * Priority the scheme assigns to an absolute TD error.
 *
 * # Safety
 * `scheme` must be valid, `out` valid for writes.
 */
enum PrplStatus prpl_priority_of(const struct PrplSchemeConfig *scheme,
                                 double abs_delta,
                                 double *out);

/**
 * Elementwise loss values and gradients. `stats` may be null, in which case
 * λ and η are computed from `deltas` for the losses that need them.
 *
 * # Safety
 * `deltas`, `out_values` and `out_grads` must hold `n` elements.
 */
enum PrplStatus prpl_losses(const struct PrplLossSpec *spec,
                            const double *deltas,
                            size_t n,
                            const struct PrplDatasetStats *stats,
                            double *out_values,
                            double *out_grads);

/**
 * PAL normaliser `λ = Σ max(|δ|^α, κ^α) / N`.
 *
 * # Safety
 * `deltas` must hold `n` elements, `out` valid for writes.
 */
enum PrplStatus prpl_pal_lambda(const double *deltas,
                                size_t n,
                                double alpha,
                                double kappa,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRPL_H */
