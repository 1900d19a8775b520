#ifndef BLINDNORM_H
#define BLINDNORM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum BnStatus {
  BN_STATUS_OK = 0,
  BN_STATUS_NULL_POINTER = 1,
  BN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A configuration document was rejected.
   */
  BN_STATUS_CONFIG = 3,
  BN_STATUS_IO = 4,
  /**
   * A point or frame lies outside a scale's domain or range.
   */
  BN_STATUS_OUT_OF_RANGE = 5,
  /**
   * Any other failure inside the library.
   */
  BN_STATUS_FAILURE = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  BN_STATUS_PANIC = 7,
  /**
   * The caller's buffer is too small.
   */
  BN_STATUS_BUFFER_TOO_SMALL = 8,
} BnStatus;

/**
 * MFCC front end.
 */
typedef struct BnFrontend BnFrontend;

/**
 * Fitted scale field of one channel.
 */
typedef struct BnScale BnScale;

/**
 * Cepstral trajectory: frames of equal dimension at a fixed hop.
 */
typedef struct BnTrajectory BnTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null if none. The string
 * stays valid until the next failing call on this thread.
 */
const char *bn_last_error(void);

/**
 * Forgets the last error on this thread.
 */
void bn_clear_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bn_version(void);

/**
 * Creates a front end. `config_json` may be null for the defaults.
 *
 * # Safety
 * `config_json` must be null or a NUL-terminated string; `out` must be
 * writable.
 */
enum BnStatus bn_frontend_new(const char *config_json, struct BnFrontend **out);

/**
 * # Safety
 * `fe` must be null or a handle from [`bn_frontend_new`], freed once.
 */
void bn_frontend_free(struct BnFrontend *fe);

/**
 * MFCC trajectory of `n_samples` mono samples.
 *
 * # Safety
 * `samples` must hold `n_samples` values; `fe` must be a live handle;
 * `out` must be writable.
 */
enum BnStatus bn_frontend_process(const struct BnFrontend *fe,
                                  const double *samples,
                                  size_t n_samples,
                                  uint32_t sample_rate,
                                  struct BnTrajectory **out);

/**
 * Trajectory from `n_frames * dim` row-major values.
 *
 * # Safety
 * `data` must hold `n_frames * dim` values; `out` must be writable.
 */
enum BnStatus bn_trajectory_new(const double *data,
                                size_t n_frames,
                                size_t dim,
                                double hop,
                                struct BnTrajectory **out);

/**
 * Loads a trajectory (`.csv` or binary container).
 *
 * # Safety
 * `file` must be a NUL-terminated path; `out` must be writable.
 */
enum BnStatus bn_trajectory_load(const char *file, struct BnTrajectory **out);

/**
 * Saves a trajectory; the format follows the extension.
 *
 * # Safety
 * `traj` must be a live handle and `file` a NUL-terminated path.
 */
enum BnStatus bn_trajectory_save(const struct BnTrajectory *traj, const char *file);

/**
 * # Safety
 * `traj` must be null or a live handle, freed once.
 */
void bn_trajectory_free(struct BnTrajectory *traj);

/**
 * Number of frames, or 0 for a null handle.
 *
 * # Safety
 * `traj` must be null or a live handle.
 */
size_t bn_trajectory_len(const struct BnTrajectory *traj);

/**
 * Frame dimension, or 0 for a null handle.
 *
 * # Safety
 * `traj` must be null or a live handle.
 */
size_t bn_trajectory_dim(const struct BnTrajectory *traj);

/**
 * Copies the frames row-major into `buf`, which must hold `len * dim`
 * values; `capacity` is its size in values.
 *
 * # Safety
 * `buf` must be writable for `capacity` values.
 */
enum BnStatus bn_trajectory_copy(const struct BnTrajectory *traj, double *buf, size_t capacity);

/**
 * Cepstral mean normalization into a new trajectory.
 *
 * # Safety
 * `traj` must be a live handle; `out` must be writable.
 */
enum BnStatus bn_cmn(const struct BnTrajectory *traj, struct BnTrajectory **out);

/**
 * Loads a scale field.
 *
 * # Safety
 * `file` must be a NUL-terminated path; `out` must be writable.
 */
enum BnStatus bn_scale_load(const char *file, struct BnScale **out);

/**
 * # Safety
 * `scale` must be null or a live handle, freed once.
 */
void bn_scale_free(struct BnScale *scale);

/**
 * Dimension of the space the scale lives in, or 0 for a null handle.
 *
 * # Safety
 * `scale` must be null or a live handle.
 */
size_t bn_scale_dim(const struct BnScale *scale);

/**
 * Scale coordinates `s(x)` of one point.
 *
 * # Safety
 * `x` and `s_out` must each hold `dim` values.
 */
enum BnStatus bn_scale_rescale(const struct BnScale *scale,
                               const double *x,
                               size_t dim,
                               double *s_out);

/**
 * The point `x` whose scale coordinates are `s`.
 *
 * # Safety
 * `s` and `x_out` must each hold `dim` values.
 */
enum BnStatus bn_scale_inverse(const struct BnScale *scale,
                               const double *s,
                               size_t dim,
                               double *x_out);

/**
 * Converts `traj` from the `from` channel to the `to` channel. Frames that
 * cannot be converted are written as NaN with `valid[t] = 0`. `frames_out`
 * holds `len * dim` values and `valid` holds `len` bytes.
 *
 * # Safety
 * All handles must be live and the buffers sized as stated.
 */
enum BnStatus bn_convert(const struct BnTrajectory *traj,
                         const struct BnScale *from,
                         const struct BnScale *to,
                         bool nearest_s,
                         double *frames_out,
                         uint8_t *valid,
                         size_t *n_out_of_range);

/**
 * Runs the full pipeline described by a JSON configuration, writing every
 * artifact below `out_dir`.
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum BnStatus bn_pipeline_run(const char *config_json, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLINDNORM_H */
