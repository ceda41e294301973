/* C interface to the stormgrid outage simulator. */

#ifndef STORMGRID_H
#define STORMGRID_H

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum SgStatus {
  /**
   * Success.
   */
  SG_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SG_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  SG_STATUS_INVALID_UTF8 = 2,
  /**
   * Config or dataset loading failed; see sg_last_error().
   */
  SG_STATUS_LOAD_FAILED = 3,
  /**
   * An argument was out of range for the handle it was applied to.
   */
  SG_STATUS_OUT_OF_RANGE = 4,
  /**
   * Simulation failed; see sg_last_error().
   */
  SG_STATUS_SIMULATION_FAILED = 5,
  /**
   * Result serialization failed; see sg_last_error().
   */
  SG_STATUS_SERIALIZE_FAILED = 6,
} SgStatus;

/**
 * Opaque handle: one completed realization.
 */
typedef struct SgRealization SgRealization;

/**
 * Opaque handle: a loaded run context (config, grid, storm track,
 * fragility curves, precomputed hazard table).
 */
typedef struct SgRun SgRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. Valid until the
 * next failing call on the same thread; never null.
 */
const char *sg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sg_version(void);

/**
 * Load a run context from a config file path.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SgStatus sg_run_open(const char *config_path, struct SgRun **out);

/**
 * Release a run context. Null is a no-op.
 *
 * # Safety
 * `run` must come from `sg_run_open` and not be used afterwards.
 */
void sg_run_close(struct SgRun *run);

/**
 * Number of simulation steps in the run's horizon; 0 for a null handle.
 *
 * # Safety
 * `run` must be a live handle from `sg_run_open` or null.
 */
uintptr_t sg_run_steps(const struct SgRun *run);

/**
 * The run's master seed from the config.
 *
 * # Safety
 * `run` must be a live handle from `sg_run_open` or null.
 */
uint64_t sg_run_master_seed(const struct SgRun *run);

/**
 * Run one seeded realization.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum SgStatus sg_run_simulate(const struct SgRun *run, uint64_t seed, struct SgRealization **out);

/**
 * Release a realization. Null is a no-op.
 *
 * # Safety
 * `r` must come from `sg_run_simulate` and not be used afterwards.
 */
void sg_realization_close(struct SgRealization *r);

/**
 * Trajectory length; 0 for a null handle.
 *
 * # Safety
 * `r` must be a live handle from `sg_run_simulate` or null.
 */
uintptr_t sg_realization_steps(const struct SgRealization *r);

/**
 * Grid performance (served-customer fraction) at one step.
 *
 * # Safety
 * `r` must be a live handle and `out` a valid pointer.
 */
enum SgStatus sg_realization_performance(const struct SgRealization *r,
                                         uintptr_t step,
                                         double *out);

/**
 * Blackout step index, or -1 if the realization never blacked out
 * (also -1 for a null handle).
 *
 * # Safety
 * `r` must be a live handle from `sg_run_simulate` or null.
 */
int64_t sg_realization_blackout_step(const struct SgRealization *r);

/**
 * Full realization record (trajectory, events, failures) as a JSON string.
 * Free the string with sg_string_free().
 *
 * # Safety
 * `r` must be a live handle and `out` a valid pointer.
 */
enum SgStatus sg_realization_json(const struct SgRealization *r, char **out);

/**
 * Run an `n`-realization ensemble with seeds derived from `master_seed`
 * and return the summary (probabilities, histograms, quantiles, critical
 * indices) as a JSON string. Free the string with sg_string_free().
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum SgStatus sg_run_ensemble_json(const struct SgRun *run,
                                   uintptr_t n,
                                   uint64_t master_seed,
                                   char **out);

/**
 * Release a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void sg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STORMGRID_H */
