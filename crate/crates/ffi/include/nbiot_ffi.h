#ifndef NBIOT_FFI_H
#define NBIOT_FFI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * CE groups per action and observation.
 */
#define NBIOT_N_GROUPS 3

#define NBIOT_OK 0

/**
 * A required pointer argument was null.
 */
#define NBIOT_ERR_NULL -1

/**
 * An argument was out of range or not valid UTF-8.
 */
#define NBIOT_ERR_INVALID_ARGUMENT -2

/**
 * Configuration text, key or value rejected.
 */
#define NBIOT_ERR_CONFIG -3

/**
 * Call not allowed in the object's current state (e.g. step before reset).
 */
#define NBIOT_ERR_STATE -4

#define NBIOT_ERR_IO -5

/**
 * Internal failure; the library caught a panic.
 */
#define NBIOT_ERR_INTERNAL -6

/**
 * Simulation and learner settings.
 */
typedef struct NbiotConfig NbiotConfig;

typedef struct NbiotEnsemble NbiotEnsemble;

typedef struct NbiotEnv NbiotEnv;

typedef struct NbiotLeUrc NbiotLeUrc;

typedef struct NbiotGroupAction {
  uint32_t n_rach;
  uint32_t f_prea;
  uint32_t n_repe;
} NbiotGroupAction;

typedef struct NbiotAction {
  struct NbiotGroupAction groups[NBIOT_N_GROUPS];
} NbiotAction;

typedef struct NbiotGroupObservation {
  uint32_t v_cp;
  uint32_t v_sp;
  uint32_t v_ip;
  uint32_t v_succ;
  uint32_t v_unsc;
} NbiotGroupObservation;

typedef struct NbiotStepResult {
  struct NbiotGroupObservation groups[NBIOT_N_GROUPS];
  /**
   * Devices served in the TTI.
   */
  double reward;
  /**
   * 1-based index of the TTI just simulated.
   */
  uint32_t tti;
  bool terminal;
} NbiotStepResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *nbiot_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nbiot_version(void);

/**
 * Default settings. Never null.
 */
struct NbiotConfig *nbiot_config_default(void);

/**
 * Parses `key = value` lines (defaults for missing keys) into `*out`.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
int32_t nbiot_config_parse(const char *text, struct NbiotConfig **out);

/**
 * Sets one setting. The configuration is validated when it is used.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` must be
 * NUL-terminated strings.
 */
int32_t nbiot_config_set(struct NbiotConfig *cfg, const char *key, const char *value);

/**
 * # Safety
 * `cfg` must come from this library (or be null) and not be used afterwards.
 */
void nbiot_config_free(struct NbiotConfig *cfg);

/**
 * Uplink REs per TTI for `cfg`.
 *
 * # Safety
 * `cfg` must come from this library; `out` must be writable.
 */
int32_t nbiot_uplink_re_budget(const struct NbiotConfig *cfg, uint32_t *out);

/**
 * REs taken by the RACH of all three groups under `action`.
 *
 * # Safety
 * `cfg` must come from this library; `action` readable, `out` writable.
 */
int32_t nbiot_rach_re_cost(const struct NbiotConfig *cfg,
                           const struct NbiotAction *action,
                           uint64_t *out);

/**
 * Probability that one preamble with `n_repe` repetitions is detected when
 * its mean SNR is `ratio` times the threshold (Rayleigh fading, four symbol
 * groups per repetition).
 */
double nbiot_detection_probability(double ratio, uint32_t n_repe);

/**
 * Contender estimate from `v_idle` idle preambles out of `f_prea`.
 */
double nbiot_zeta(uint32_t f_prea, double v_idle, double cap);

/**
 * Expected data requests from `n` contenders on `f_prea` preambles plus
 * `v_unsc` devices still waiting.
 */
double nbiot_expected_requests(double n, uint32_t f_prea, uint32_t v_unsc);

/**
 * Creates an environment; the configuration is copied.
 *
 * # Safety
 * `cfg` must come from this library; `out` must be writable.
 */
int32_t nbiot_env_new(const struct NbiotConfig *cfg, struct NbiotEnv **out);

/**
 * Length of the state vectors written by reset and step.
 *
 * # Safety
 * `env` must come from this library or be null (returns 0).
 */
size_t nbiot_env_state_len(const struct NbiotEnv *env);

/**
 * Starts an episode drawn from `seed` and writes the initial state.
 *
 * # Safety
 * `env` must come from this library; `state` must hold `state_len` doubles.
 */
int32_t nbiot_env_reset(struct NbiotEnv *env, uint64_t seed, double *state, size_t state_len);

/**
 * Simulates one TTI. `state` may be null when the next state is not needed.
 *
 * # Safety
 * `env` must come from this library; `action` readable; `result` writable;
 * a non-null `state` must hold `state_len` doubles.
 */
int32_t nbiot_env_step(struct NbiotEnv *env,
                       const struct NbiotAction *action,
                       struct NbiotStepResult *result,
                       double *state,
                       size_t state_len);

/**
 * # Safety
 * `env` must come from this library (or be null) and not be used afterwards.
 */
void nbiot_env_free(struct NbiotEnv *env);

/**
 * LE-URC with fixed repetitions `n_repe[0..3]`.
 *
 * # Safety
 * `cfg` must come from this library; `n_repe` must point to 3 values.
 */
int32_t nbiot_le_urc_new(const struct NbiotConfig *cfg,
                         const uint32_t *n_repe,
                         struct NbiotLeUrc **out);

/**
 * Action for the coming TTI.
 *
 * # Safety
 * `ctl` must come from this library; `out` must be writable.
 */
int32_t nbiot_le_urc_decide(struct NbiotLeUrc *ctl, struct NbiotAction *out);

/**
 * Feeds back the outcome of the TTI that ran with `action`.
 *
 * # Safety
 * `ctl` must come from this library; `result` and `action` readable.
 */
int32_t nbiot_le_urc_observe(struct NbiotLeUrc *ctl,
                             const struct NbiotStepResult *result,
                             const struct NbiotAction *action);

/**
 * Clears the load estimates before a new episode.
 *
 * # Safety
 * `ctl` must come from this library.
 */
int32_t nbiot_le_urc_reset(struct NbiotLeUrc *ctl);

/**
 * # Safety
 * `ctl` must come from this library (or be null) and not be used afterwards.
 */
void nbiot_le_urc_free(struct NbiotLeUrc *ctl);

/**
 * Loads a training checkpoint written by `nbiot-sim`; `cfg` must describe
 * the same network shapes.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `cfg` from this library; `out`
 * writable.
 */
int32_t nbiot_ensemble_load(const char *path,
                            const struct NbiotConfig *cfg,
                            struct NbiotEnsemble **out);

/**
 * Greedy joint action of the nine agents for `state`.
 *
 * # Safety
 * `ens` must come from this library; `state` must hold `state_len`
 * doubles; `out` writable.
 */
int32_t nbiot_ensemble_greedy(const struct NbiotEnsemble *ens,
                              const double *state,
                              size_t state_len,
                              struct NbiotAction *out);

/**
 * # Safety
 * `ens` must come from this library (or be null) and not be used afterwards.
 */
void nbiot_ensemble_free(struct NbiotEnsemble *ens);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NBIOT_FFI_H */
