#ifndef FUSIFORM_H
#define FUSIFORM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Values match the exit codes of the `fusiform` binary.
 */
typedef enum FsfStatus {
  FSF_OK = 0,
  FSF_ERR_NULL = 1,
  FSF_ERR_ARGUMENT = 2,
  FSF_ERR_MISSING_FILE = 3,
  FSF_ERR_IO = 4,
  FSF_ERR_CRC = 5,
  FSF_ERR_FORMAT = 6,
  FSF_ERR_INCOMPATIBLE = 7,
  FSF_ERR_NUMERIC = 8,
  FSF_ERR_DATA = 9,
  FSF_ERR_SHAPE = 10,
  FSF_ERR_PANIC = 11,
} FsfStatus;

/**
 * Frozen autoencoder.
 */
typedef struct FsfAutoencoder FsfAutoencoder;

/**
 * Run configuration.
 */
typedef struct FsfConfig FsfConfig;

/**
 * Features of one image.
 */
typedef struct FsfFeatures FsfFeatures;

/**
 * Frozen perceptual network.
 */
typedef struct FsfPerceptual FsfPerceptual;

/**
 * Trained verifier head.
 */
typedef struct FsfVerifier FsfVerifier;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *fsf_version(void);

/**
 * Length in bytes of the last error message on this thread, excluding the
 * terminator. Zero if there is none.
 */
size_t fsf_last_error_length(void);

/**
 * Copies the last error message into `buf` (truncated, always terminated)
 * and returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t fsf_last_error_message(char *buf, size_t len);

/**
 * Toy preset configuration.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum FsfStatus fsf_config_toy(struct FsfConfig **out);

/**
 * Parses `key=value` configuration text.
 *
 * # Safety
 * `config_text` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum FsfStatus fsf_config_parse(const char *config_text, struct FsfConfig **out);

/**
 * # Safety
 * `config` must come from this library and not be freed twice.
 */
void fsf_config_free(struct FsfConfig *config);

/**
 * Input side length expected by models built from `config`.
 *
 * # Safety
 * `config` must be a live handle or null.
 */
size_t fsf_config_image_size(const struct FsfConfig *config);

/**
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
enum FsfStatus fsf_autoencoder_load(const char *path,
                                    const struct FsfConfig *config,
                                    struct FsfAutoencoder **out);

/**
 * # Safety
 * `model` must come from this library and not be freed twice.
 */
void fsf_autoencoder_free(struct FsfAutoencoder *model);

/**
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
enum FsfStatus fsf_perceptual_load(const char *path,
                                   const struct FsfConfig *config,
                                   struct FsfPerceptual **out);

/**
 * # Safety
 * `model` must come from this library and not be freed twice.
 */
void fsf_perceptual_free(struct FsfPerceptual *model);

/**
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
enum FsfStatus fsf_verifier_load(const char *path,
                                 const struct FsfConfig *config,
                                 struct FsfVerifier **out);

/**
 * # Safety
 * `model` must come from this library and not be freed twice.
 */
void fsf_verifier_free(struct FsfVerifier *model);

/**
 * Extracts features from one planar RGB image (`3 * height * width` floats,
 * channel-major, any value range). The image is min-max normalized and
 * resized to the model's input size first.
 *
 * # Safety
 * `pixels` must be valid for `3 * height * width` reads; handles must be live.
 */
enum FsfStatus fsf_extract(const struct FsfAutoencoder *autoencoder,
                           const struct FsfPerceptual *perceptual,
                           const float *pixels,
                           size_t height,
                           size_t width,
                           struct FsfFeatures **out);

/**
 * # Safety
 * `features` must come from this library and not be freed twice.
 */
void fsf_features_free(struct FsfFeatures *features);

/**
 * Lengths of the coarse (`v_c`) and detail (`v_d`) vectors.
 *
 * # Safety
 * `features` must be live; `vc_len` and `vd_len` valid for writes.
 */
enum FsfStatus fsf_features_dims(const struct FsfFeatures *features,
                                 size_t *vc_len,
                                 size_t *vd_len);

/**
 * Copies `v_c` and `v_d` into caller buffers whose capacities must be at
 * least the lengths reported by `fsf_features_dims`.
 *
 * # Safety
 * Buffers must be valid for the given capacities.
 */
enum FsfStatus fsf_features_copy(const struct FsfFeatures *features,
                                 float *vc,
                                 size_t vc_cap,
                                 float *vd,
                                 size_t vd_cap);

/**
 * Same-identity probability for two feature sets, in (0, 1).
 *
 * # Safety
 * Handles must be live; `score` valid for writes.
 */
enum FsfStatus fsf_verify(const struct FsfVerifier *verifier,
                          const struct FsfFeatures *a,
                          const struct FsfFeatures *b,
                          float *score);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUSIFORM_H */
