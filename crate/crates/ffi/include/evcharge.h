/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef EVCHARGE_H
#define EVCHARGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EvcStatus {
  EVC_STATUS_OK = 0,
  EVC_STATUS_NULL_POINTER = 1,
  EVC_STATUS_INVALID_ARGUMENT = 2,
  EVC_STATUS_SHAPE_MISMATCH = 3,
  EVC_STATUS_DATA_ERROR = 4,
  EVC_STATUS_EPISODE_DONE = 5,
  EVC_STATUS_PANIC = 6,
} EvcStatus;

/**
 * Opaque batch of environments.
 */
typedef struct EvcBatch EvcBatch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates `batch` environments seeded from `seed`.
 *
 * `config_json` is a run configuration document or NULL for defaults.
 * Auto-reset is on.
 *
 * # Safety
 * `config_json` must be NULL or a valid NUL-terminated string; `out` must be
 * a valid pointer to writable storage for one handle pointer.
 */
enum EvcStatus evc_batch_new(const char *config_json,
                             size_t batch,
                             uint64_t seed,
                             struct EvcBatch **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `handle` must be NULL or a pointer returned by [`evc_batch_new`] that has
 * not been freed.
 */
void evc_batch_free(struct EvcBatch *handle);

/**
 * Number of environments; 0 for NULL.
 *
 * # Safety
 * `handle` must be NULL or a live handle.
 */
size_t evc_batch_size(const struct EvcBatch *handle);

/**
 * Length of one observation row; 0 for NULL.
 *
 * # Safety
 * `handle` must be NULL or a live handle.
 */
size_t evc_obs_len(const struct EvcBatch *handle);

/**
 * Entries per action row: ports plus the battery slot; 0 for NULL.
 *
 * # Safety
 * `handle` must be NULL or a live handle.
 */
size_t evc_action_len(const struct EvcBatch *handle);

/**
 * Choices per action entry (`2K + 1`); 0 for NULL.
 *
 * # Safety
 * `handle` must be NULL or a live handle.
 */
uint32_t evc_num_actions(const struct EvcBatch *handle);

/**
 * Worker threads for stepping; 0 means all cores.
 *
 * # Safety
 * `handle` must be NULL or a live handle.
 */
enum EvcStatus evc_batch_set_workers(struct EvcBatch *handle, size_t workers);

/**
 * Writes finite per-entry observation bounds (`obs_len` each).
 *
 * # Safety
 * `low` and `high` must point to `len` writable doubles.
 */
enum EvcStatus evc_observation_bounds(const struct EvcBatch *handle,
                                      double *low,
                                      double *high,
                                      size_t len);

/**
 * Resets every environment to its first episode.
 *
 * # Safety
 * `obs_out` must point to `obs_len` writable doubles.
 */
enum EvcStatus evc_batch_reset(struct EvcBatch *handle, double *obs_out, size_t obs_len);

/**
 * Steps every environment. Finished environments are reset automatically:
 * their `dones` entry is 1 and their observation row is the fresh episode's.
 *
 * # Safety
 * `actions` must point to `actions_len` readable values, `obs_out` to
 * `obs_len` writable doubles, `rewards_out` to `batch` writable doubles and
 * `dones_out` to `batch` writable bytes.
 */
enum EvcStatus evc_batch_step(struct EvcBatch *handle,
                              const uint32_t *actions,
                              size_t actions_len,
                              double *obs_out,
                              size_t obs_len,
                              double *rewards_out,
                              uint8_t *dones_out,
                              size_t batch);

/**
 * JSON array with the step details of the last [`evc_batch_step`], one
 * object per environment. The string stays valid until the next call on
 * this handle.
 *
 * # Safety
 * `handle` must be a live handle and `out` a valid pointer.
 */
enum EvcStatus evc_batch_last_infos_json(struct EvcBatch *handle, const char **out);

/**
 * Message of the last failed call on this thread; empty if none. Valid until
 * the next failing call on the same thread.
 */
const char *evc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *evc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVCHARGE_H */
