#ifndef ADP_H
#define ADP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AdpGuidanceMode {
  ADP_GUIDANCE_MODE_VANILLA = 0,
  ADP_GUIDANCE_MODE_GUIDED_NOISY = 1,
  ADP_GUIDANCE_MODE_GUIDED_TWEEDIE = 2,
  ADP_GUIDANCE_MODE_GUIDED_SPHERICAL = 3,
} AdpGuidanceMode;

typedef enum AdpInitMode {
  ADP_INIT_MODE_RANDOM_NOISE = 0,
  ADP_INIT_MODE_FGR_DIRECT = 1,
  ADP_INIT_MODE_FGR_FORWARD_DIFFUSED = 2,
} AdpInitMode;

typedef enum AdpStatus {
  ADP_STATUS_OK = 0,
  ADP_STATUS_NULL_POINTER = 1,
  ADP_STATUS_INVALID_ARGUMENT = 2,
  ADP_STATUS_IO = 3,
  ADP_STATUS_FORMAT = 4,
  ADP_STATUS_NUMERICAL = 5,
  ADP_STATUS_INVARIANT = 6,
  ADP_STATUS_PANIC = 7,
} AdpStatus;

/*
 Opaque trained denoiser with its noise schedule.
 */
typedef struct AdpDenoiser AdpDenoiser;

/*
 Opaque point cloud.
 */
typedef struct AdpPointCloud AdpPointCloud;

typedef struct AdpRegistration {
  /*
   Row-major 4×4 transform mapping source onto target.
   */
  double matrix[16];
  double fitness;
  double inlier_rmse;
} AdpRegistration;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next call into the library from the same thread.
 */
const char *adp_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *adp_version(void);

/*
 Cloud from `n` points stored as `xyz[3*i..3*i+3]`.

 # Safety
 `xyz` must point to `3*n` doubles; `out` must be writable.
 */
enum AdpStatus adp_cloud_new(const double *xyz, uintptr_t n, struct AdpPointCloud **out);

/*
 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum AdpStatus adp_cloud_read_ply(const char *path, struct AdpPointCloud **out);

/*
 # Safety
 `cloud` must be a live handle; `out` must be writable.
 */
enum AdpStatus adp_cloud_len(const struct AdpPointCloud *cloud, uintptr_t *out);

/*
 # Safety
 `cloud` must be NULL or a handle not yet freed.
 */
void adp_cloud_free(struct AdpPointCloud *cloud);

/*
 Symmetric mean squared nearest-neighbour distance.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum AdpStatus adp_chamfer(const struct AdpPointCloud *a,
                           const struct AdpPointCloud *b,
                           double *out);

/*
 FGR with default settings.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum AdpStatus adp_register(const struct AdpPointCloud *source,
                            const struct AdpPointCloud *target,
                            struct AdpRegistration *out);

/*
 Load weights written by `adp train`.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum AdpStatus adp_denoiser_load(const char *path, struct AdpDenoiser **out);

/*
 Actions per sample and scalars per action.

 # Safety
 `d` must be a live handle; outputs must be writable.
 */
enum AdpStatus adp_denoiser_shape(const struct AdpDenoiser *d,
                                  uintptr_t *n_actions,
                                  uintptr_t *action_dim);

/*
 # Safety
 `d` must be NULL or a handle not yet freed.
 */
void adp_denoiser_free(struct AdpDenoiser *d);

/*
 Draw one action sequence.

 `history` holds `n_history` encoded poses of `ACTION_DIM` scalars each,
 oldest first. `steps` is the respaced step count; 0 keeps the trained
 schedule. The result is written to `out[0..out_len]`, where `out_len` must
 equal `n_actions * action_dim`.

 # Safety
 Handles must be live; `history` must hold `n_history * ACTION_DIM`
 doubles and `out` `out_len` doubles.
 */
enum AdpStatus adp_sample_actions(const struct AdpDenoiser *d,
                                  const struct AdpPointCloud *gripper,
                                  const struct AdpPointCloud *scene,
                                  const double *history,
                                  uintptr_t n_history,
                                  uint32_t task_id,
                                  enum AdpGuidanceMode mode,
                                  enum AdpInitMode init,
                                  uintptr_t steps,
                                  uint64_t seed,
                                  double *out,
                                  uintptr_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADP_H */
