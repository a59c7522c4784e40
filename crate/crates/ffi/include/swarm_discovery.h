#ifndef SWARM_DISCOVERY_H
#define SWARM_DISCOVERY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  SD_STATUS_OK = 0,
  SD_STATUS_NULL_POINTER = 1,
  SD_STATUS_INVALID_ARGUMENT = 2,
  SD_STATUS_IO = 3,
  SD_STATUS_FORMAT = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  SD_STATUS_INTERNAL = 5,
} SdStatus;

typedef enum {
  SD_CONVENTION_STRICT = 0,
  SD_CONVENTION_NON_STRICT = 1,
} SdConvention;

/**
 * Opaque controller handle.
 */
typedef struct SdController SdController;

/**
 * Opaque embedding network loaded from a checkpoint.
 */
typedef struct SdEmbedder SdEmbedder;

/**
 * Opaque simulated trajectory.
 */
typedef struct SdTrajectory SdTrajectory;

/**
 * Rollout parameters; start from `sd_rollout_settings_default`.
 */
typedef struct {
  double width;
  double height;
  size_t agents;
  size_t horizon;
  size_t window;
  size_t image_size;
  double wheel_radius;
  double agent_radius;
  double dt;
} SdRolloutSettings;

typedef struct {
  double metrics[5];
  double score;
  bool passes;
} SdHeuristic;

typedef struct {
  uint64_t total;
  uint64_t passed;
  uint64_t filtered;
} SdFilterSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *sd_last_error(void);

SdRolloutSettings sd_rollout_settings_default(void);

/**
 * Builds a controller from 4 velocities, or 8 velocities followed by the
 * second sensor's angle in radians.
 *
 * # Safety
 * `values` must point to `len` readable doubles; `out` must be writable.
 */
SdStatus sd_controller_new(const double *values, size_t len, SdController **out_handle);

/**
 * # Safety
 * `c` must come from `sd_controller_new` and not be used afterwards.
 */
void sd_controller_free(SdController *c);

/**
 * Heuristic filter report with the default thresholds.
 *
 * # Safety
 * `c` must be a live controller handle; `report` must be writable.
 */
SdStatus sd_controller_heuristic(const SdController *c,
                                 SdConvention convention,
                                 SdHeuristic *report);

/**
 * Scores the whole discretized single-sensor space.
 *
 * # Safety
 * `summary` must be writable.
 */
SdStatus sd_filter_single_sensor_space(SdConvention convention, SdFilterSummary *summary);

/**
 * Rolls out `c` from the initial state drawn with `seed`.
 *
 * # Safety
 * `c` and `settings` must be valid; `out_handle` must be writable.
 */
SdStatus sd_simulate(const SdController *c,
                     const SdRolloutSettings *settings,
                     uint64_t seed,
                     SdTrajectory **out_handle);

/**
 * # Safety
 * `t` must come from `sd_simulate` and not be used afterwards.
 */
void sd_trajectory_free(SdTrajectory *t);

/**
 * Number of stored frames (horizon + 1); 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live trajectory handle.
 */
size_t sd_trajectory_frame_count(const SdTrajectory *t);

/**
 * # Safety
 * `t` must be null or a live trajectory handle.
 */
size_t sd_trajectory_agent_count(const SdTrajectory *t);

/**
 * Writes `x, y, theta` for every agent of `frame` into `xyt`, which must
 * hold `3 * agent_count` doubles.
 *
 * # Safety
 * `t` must be a live trajectory; `xyt` must point to `len` writable doubles.
 */
SdStatus sd_trajectory_frame(const SdTrajectory *t, size_t frame, double *xyt, size_t len);

/**
 * Hand-crafted features averaged over the final `window` frames:
 * average speed, angular momentum, radial variance, scatter, group rotation.
 *
 * # Safety
 * `t` must be a live trajectory; `features` must hold 5 doubles.
 */
SdStatus sd_trajectory_features(const SdTrajectory *t, size_t window, double *features);

/**
 * Renders the final `window` frames into a `size * size` row-major image.
 *
 * # Safety
 * `t` must be a live trajectory; `pixels` must hold `len` floats.
 */
SdStatus sd_trajectory_render(const SdTrajectory *t,
                              size_t window,
                              size_t size,
                              float *pixels,
                              size_t len);

/**
 * Loads an embedding network checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_handle` must be writable.
 */
SdStatus sd_embedder_load(const char *path, SdEmbedder **out_handle);

/**
 * # Safety
 * `e` must come from `sd_embedder_load` and not be used afterwards.
 */
void sd_embedder_free(SdEmbedder *e);

/**
 * # Safety
 * `e` must be null or a live embedder handle.
 */
size_t sd_embedder_input_len(const SdEmbedder *e);

/**
 * # Safety
 * `e` must be null or a live embedder handle.
 */
size_t sd_embedder_output_dim(const SdEmbedder *e);

/**
 * Embeds one image.
 *
 * # Safety
 * `pixels` must hold `len` floats and `embedding` `dim` doubles.
 */
SdStatus sd_embedder_embed(const SdEmbedder *e,
                           const float *pixels,
                           size_t len,
                           double *embedding,
                           size_t dim);

/**
 * Mean distance from `behavior` to its `k` nearest archive rows;
 * infinity for an empty archive.
 *
 * # Safety
 * `behavior` must hold `dim` doubles and `archive` `rows * dim` doubles.
 */
SdStatus sd_novelty(const double *behavior,
                    size_t dim,
                    const double *archive,
                    size_t rows,
                    size_t k,
                    double *score);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWARM_DISCOVERY_H */
