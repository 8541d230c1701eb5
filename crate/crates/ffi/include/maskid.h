/* C interface for the maskid speech-enhancement models. */

#ifndef MASKID_H
#define MASKID_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Model kinds reported by `maskid_model_kind`.
 */
typedef enum MaskidModelKind {
  MaskidModelVerifier = 0,
  MaskidModelMasker = 1,
  MaskidModelDae = 2,
} MaskidModelKind;

/**
 * Result codes; nonzero values mirror the CLI exit codes.
 */
typedef enum MaskidStatus {
  /**
   * Success.
   */
  MaskidStatusOk = 0,
  /**
   * Bad arguments: null pointers, invalid UTF-8, wrong model kind.
   */
  MaskidStatusInvalidArgument = 2,
  /**
   * Unreadable or malformed files and checkpoints.
   */
  MaskidStatusData = 3,
  /**
   * Non-finite values or numeric failure inside the models.
   */
  MaskidStatusNumeric = 4,
  /**
   * A panic crossed the boundary; state may be inconsistent.
   */
  MaskidStatusPanic = 5,
} MaskidStatus;

/**
 * Opaque model handle.
 */
typedef struct MaskidModel MaskidModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. Never null; the
 * pointer is invalidated by the next failing call on the same thread.
 */
const char *maskid_last_error(void);

/**
 * Library version as a static string.
 */
const char *maskid_version(void);

/**
 * Load any checkpoint. On success, `*out` owns the model.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MaskidStatus maskid_model_load(const char *path, struct MaskidModel **out);

/**
 * Release a model handle. Null is a no-op.
 *
 * # Safety
 * `handle` must come from `maskid_model_load` and not be freed twice.
 */
void maskid_model_free(struct MaskidModel *handle);

/**
 * Report what kind of model a handle holds.
 *
 * # Safety
 * `handle` and `out` must be valid pointers.
 */
enum MaskidStatus maskid_model_kind(struct MaskidModel *handle, enum MaskidModelKind *out);

/**
 * Embedding dimensionality of a verifier handle.
 *
 * # Safety
 * `handle` and `out` must be valid pointers.
 */
enum MaskidStatus maskid_embedding_dim(struct MaskidModel *handle, uintptr_t *out);

/**
 * Enhance a 16 kHz mono wav file and write the result.
 *
 * # Safety
 * All pointers must be valid; paths are NUL-terminated strings.
 */
enum MaskidStatus maskid_enhance_file(struct MaskidModel *handle,
                                      const char *input_path,
                                      const char *output_path);

/**
 * Embed a wav file with a verifier handle. `buf` receives up to `buf_len`
 * values; `*out_dim` is set to the embedding dimension. Fails with
 * invalid-argument when the buffer is too small.
 *
 * # Safety
 * `buf` must point to at least `buf_len` writable doubles.
 */
enum MaskidStatus maskid_embed_file(struct MaskidModel *handle,
                                    const char *wav_path,
                                    double *buf,
                                    uintptr_t buf_len,
                                    uintptr_t *out_dim);

/**
 * Cosine score between two wav files under a verifier handle.
 *
 * # Safety
 * All pointers must be valid; paths are NUL-terminated strings.
 */
enum MaskidStatus maskid_score_pair(struct MaskidModel *handle,
                                    const char *wav_a,
                                    const char *wav_b,
                                    double *out_score);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* MASKID_H */
