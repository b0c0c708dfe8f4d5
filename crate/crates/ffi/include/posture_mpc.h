#ifndef POSTURE_MPC_H
#define POSTURE_MPC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Ablation bits for [`pm_scenario_set_ablation`].
 */
#define PM_ABLATION_NO_INSTANT 1

#define PM_ABLATION_CONSTANT_GAIN 2

#define PM_ABLATION_PD 4

#define PM_ABLATION_VANILLA_MPPI 8

typedef enum PmStatus {
  PM_STATUS_OK = 0,
  PM_STATUS_NULL_POINTER = 1,
  PM_STATUS_INVALID_ARGUMENT = 2,
  PM_STATUS_PARSE = 3,
  PM_STATUS_VALIDATION = 4,
  PM_STATUS_IO = 5,
  PM_STATUS_DIVERGED = 6,
  PM_STATUS_DIMENSION = 7,
  PM_STATUS_BUFFER_TOO_SMALL = 8,
  PM_STATUS_PANIC = 9,
} PmStatus;

/**
 * A posture planner plus low-level controller bound to one scenario, for
 * driving an external simulation.
 */
typedef struct PmController PmController;

/**
 * A resolved scenario.
 */
typedef struct PmScenario PmScenario;

/**
 * Episode summary. Optional times are negative when absent.
 */
typedef struct PmEpisodeMetrics {
  double cumulative_cost;
  double forward_distance;
  double time_upright;
  double fall_time;
  double energy;
  uint64_t plans;
  double mean_plan_latency;
  double max_plan_latency;
  double mean_gain;
  bool final_upright;
  bool diverged;
} PmEpisodeMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message into `buf` (NUL
 * terminated). Returns the message length in bytes excluding the NUL,
 * whether or not it fit; 0 when there is no message.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t pm_last_error(char *buf, size_t len);

/**
 * Load a bundled scenario by name or a scenario file by path.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum PmStatus pm_scenario_load(const char *name, struct PmScenario **out);

/**
 * Parse a scenario from TOML text. Model and task names must be bundled.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum PmStatus pm_scenario_from_toml(const char *text, struct PmScenario **out);

/**
 * # Safety
 * `scenario` must be null or a handle from this library, not yet freed.
 */
void pm_scenario_free(struct PmScenario *scenario);

/**
 * # Safety
 * `scenario` must be a live handle.
 */
enum PmStatus pm_scenario_set_seed(struct PmScenario *scenario, uint64_t seed);

/**
 * Replace the ablation switches with `flags` (`PM_ABLATION_*` bits).
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum PmStatus pm_scenario_set_ablation(struct PmScenario *scenario, uint32_t flags);

/**
 * Override the episode length in seconds.
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum PmStatus pm_scenario_set_duration(struct PmScenario *scenario, double seconds);

/**
 * Coordinate, muscle and target-posture counts of the scenario's model.
 *
 * # Safety
 * `scenario` must be a live handle; the outputs must be writable.
 */
enum PmStatus pm_scenario_dims(const struct PmScenario *scenario,
                               size_t *nq,
                               size_t *nu,
                               size_t *nz);

/**
 * Run a full lockstep episode.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum PmStatus pm_run_episode(const struct PmScenario *scenario, struct PmEpisodeMetrics *out);

/**
 * A controller for the scenario, starting from its initial state.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum PmStatus pm_controller_new(const struct PmScenario *scenario, struct PmController **out);

/**
 * # Safety
 * `controller` must be null or a handle from this library, not yet freed.
 */
void pm_controller_free(struct PmController *controller);

/**
 * Plan from the given state; the new target posture is written to `z_out`
 * and used by later [`pm_controller_act`] calls.
 *
 * # Safety
 * `controller` must be a live handle; `q`/`qdot` hold `nq` values, `act`
 * holds `nu`, and `z_out` has room for `z_len ≥ nz`.
 */
enum PmStatus pm_controller_plan(struct PmController *controller,
                                 const double *q,
                                 const double *qdot,
                                 size_t nq,
                                 const double *act,
                                 size_t nu,
                                 double time,
                                 double *z_out,
                                 size_t z_len);

/**
 * Muscle excitations that track the current target posture from the
 * given state, written to `u_out`.
 *
 * # Safety
 * As for [`pm_controller_plan`], with `u_out` holding `u_len ≥ nu`.
 */
enum PmStatus pm_controller_act(const struct PmController *controller,
                                const double *q,
                                const double *qdot,
                                size_t nq,
                                const double *act,
                                size_t nu,
                                double time,
                                double *u_out,
                                size_t u_len);

/**
 * Copy the scenario's initial state out.
 *
 * # Safety
 * `scenario` must be a live handle; `q_out`/`qdot_out` have room for `nq`
 * values and `act_out` for `nu`.
 */
enum PmStatus pm_scenario_initial_state(const struct PmScenario *scenario,
                                        double *q_out,
                                        double *qdot_out,
                                        size_t nq,
                                        double *act_out,
                                        size_t nu);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POSTURE_MPC_H */
