#ifndef HOPLAB_H
#define HOPLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum HoplabStatus {
  HOPLAB_STATUS_OK = 0,
  HOPLAB_STATUS_NULL_POINTER = 1,
  HOPLAB_STATUS_INVALID_ARGUMENT = 2,
  HOPLAB_STATUS_CONFIG = 3,
  HOPLAB_STATUS_KINEMATICS = 4,
  HOPLAB_STATUS_SIM = 5,
  HOPLAB_STATUS_EPISODE = 6,
  HOPLAB_STATUS_EPISODE_DONE = 7,
  HOPLAB_STATUS_IO = 8,
  HOPLAB_STATUS_PANIC = 9,
} HoplabStatus;

/**
 * Robot configuration.
 */
typedef struct HoplabConfig HoplabConfig;

/**
 * One environment episode stepped at the control rate.
 */
typedef struct HoplabEnv HoplabEnv;

/**
 * One trainer-protocol session.
 */
typedef struct HoplabSession HoplabSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next hoplab call on the same thread.
 */
const char *hoplab_last_error(void);

/**
 * Length of the observation vector.
 */
size_t hoplab_obs_dim(void);

/**
 * Default configuration.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum HoplabStatus hoplab_config_default(struct HoplabConfig **out);

/**
 * Configuration parsed from TOML text; omitted keys take defaults.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` valid for writing one
 * pointer.
 */
enum HoplabStatus hoplab_config_from_toml(const char *toml, struct HoplabConfig **out);

/**
 * # Safety
 * `cfg` must be NULL or a handle from a `hoplab_config_*` constructor that
 * has not been freed.
 */
void hoplab_config_free(struct HoplabConfig *cfg);

/**
 * Foot position of the parallel leg for motor angles `q`.
 *
 * # Safety
 * `cfg` must be a live handle; `q` and `foot` must point to 3 doubles.
 */
enum HoplabStatus hoplab_fk(const struct HoplabConfig *cfg, const double *q, double *foot);

/**
 * Motor angles placing the foot at `foot`.
 *
 * # Safety
 * `cfg` must be a live handle; `foot` and `q` must point to 3 doubles.
 */
enum HoplabStatus hoplab_ik(const struct HoplabConfig *cfg, const double *foot, double *q);

/**
 * Template joints `(roll, pitch, ext)` placing the foot at `foot`.
 *
 * # Safety
 * `cfg` must be a live handle; `foot` and `serial_q` must point to 3
 * doubles.
 */
enum HoplabStatus hoplab_ik_serial(const struct HoplabConfig *cfg,
                                   const double *foot,
                                   double *serial_q);

/**
 * Foot position of the template for joints `serial_q`.
 *
 * # Safety
 * `serial_q` and `foot` must point to 3 doubles.
 */
enum HoplabStatus hoplab_fk_serial(const double *serial_q, double *foot);

/**
 * Template efforts equivalent to motor torques `tau_parallel` at the
 * matched pose of template joints `serial_q`.
 *
 * # Safety
 * `cfg` must be a live handle; the vectors must point to 3 doubles.
 */
enum HoplabStatus hoplab_parallel_to_serial(const struct HoplabConfig *cfg,
                                            const double *serial_q,
                                            const double *tau_parallel,
                                            double *tau_serial);

/**
 * Starts an episode on flat ground with torque mapping. Each step takes
 * a motor-angle target.
 *
 * # Safety
 * `cfg` must be a live handle and `out` valid for writing one pointer.
 */
enum HoplabStatus hoplab_env_new(const struct HoplabConfig *cfg,
                                 uint64_t seed,
                                 double vx,
                                 double vy,
                                 double period,
                                 double horizon,
                                 bool randomize,
                                 struct HoplabEnv **out);

/**
 * # Safety
 * `env` must be NULL or a live handle from [`hoplab_env_new`].
 */
void hoplab_env_free(struct HoplabEnv *env);

/**
 * Current observation.
 *
 * # Safety
 * `env` must be a live handle and `obs` point to `len` doubles.
 */
enum HoplabStatus hoplab_env_observation(const struct HoplabEnv *env, double *obs, size_t len);

/**
 * Advances one control step with motor target `action` and writes the
 * next observation, the reward and the done flag.
 *
 * # Safety
 * `env` must be a live handle, `action` point to 3 doubles, `obs` to `len`
 * doubles, and `reward` and `done` must be writable.
 */
enum HoplabStatus hoplab_env_step(struct HoplabEnv *env,
                                  const double *action,
                                  double *obs,
                                  size_t len,
                                  double *reward,
                                  bool *done);

/**
 * Simulated time of the episode, s.
 *
 * # Safety
 * `env` must be a live handle and `t` writable.
 */
enum HoplabStatus hoplab_env_time(const struct HoplabEnv *env, double *t);

/**
 * New protocol session.
 *
 * # Safety
 * `cfg` must be a live handle and `out` valid for writing one pointer.
 */
enum HoplabStatus hoplab_session_new(const struct HoplabConfig *cfg, struct HoplabSession **out);

/**
 * # Safety
 * `session` must be NULL or a live handle from [`hoplab_session_new`].
 */
void hoplab_session_free(struct HoplabSession *session);

/**
 * Handles one request line and returns the JSON response in `response`,
 * to be released with [`hoplab_string_free`]. `close` is set when the
 * session should end. Protocol errors are reported inside the response,
 * not through the status.
 *
 * # Safety
 * `session` must be a live handle, `request` a NUL-terminated string, and
 * `response` and `close` writable.
 */
enum HoplabStatus hoplab_session_handle(struct HoplabSession *session,
                                        const char *request,
                                        char **response,
                                        bool *close);

/**
 * Releases a string returned by hoplab.
 *
 * # Safety
 * `s` must be NULL or a string returned by hoplab that has not been freed.
 */
void hoplab_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOPLAB_H */
