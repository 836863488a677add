#ifndef RICCIFLOW_H
#define RICCIFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>

/*
 Result code of every call.
 */
typedef enum RfStatus {
  RF_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  RF_STATUS_NULL = 1,
  /*
   An argument violates a documented precondition.
   */
  RF_STATUS_INVALID_ARGUMENT = 2,
  /*
   An argument lies outside the mathematical domain of the operation.
   */
  RF_STATUS_DOMAIN = 3,
  /*
   Malformed JSON or an unsupported schema version.
   */
  RF_STATUS_PARSE = 4,
  /*
   A solver failed to converge.
   */
  RF_STATUS_CONVERGENCE = 5,
  /*
   A flow went extinct before the requested time.
   */
  RF_STATUS_EXTINCTION = 6,
  /*
   Reading or writing files failed.
   */
  RF_STATUS_IO = 7,
  /*
   The operation is not available for this surface or chart.
   */
  RF_STATUS_UNSUPPORTED = 8,
  /*
   A panic was caught at the boundary.
   */
  RF_STATUS_PANIC = 9,
} RfStatus;

/*
 The trajectories of a scenario.
 */
typedef struct RfCampaign RfCampaign;

/*
 A validated scenario.
 */
typedef struct RfScenario RfScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. Valid until the
 next failing call on the same thread.
 */
const char *rf_last_error(void);

/*
 Library version as a static string.
 */
const char *rf_version(void);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void rf_string_free(char *s);

/*
 Maximal existence time `T` of the flow from a measure given as JSON.

 # Safety
 `measure_json` must be a nul-terminated string and `out` writable.
 */
enum RfStatus rf_maximal_time(const char *measure_json, double *out_t);

/*
 Volume of `B_r(0)` in the complete hyperbolic metric of `B_radius(0)`.

 # Safety
 `out` must be writable.
 */
enum RfStatus rf_hyperbolic_volume(double r, double radius, double *out_volume);

/*
 Parses and validates a scenario.

 # Safety
 `json` must be a nul-terminated string and `out` writable.
 */
enum RfStatus rf_scenario_from_json(const char *json, struct RfScenario **out_scenario);

/*
 Reads, parses and validates a scenario file.

 # Safety
 `path` must be a nul-terminated string and `out` writable.
 */
enum RfStatus rf_scenario_load(const char *path, struct RfScenario **out_scenario);

/*
 Releases a scenario. Null is ignored.

 # Safety
 `scenario` must come from this library and not have been freed.
 */
void rf_scenario_free(struct RfScenario *scenario);

/*
 Runs every trajectory the scenario needs.

 # Safety
 `scenario` must be a live handle and `out` writable.
 */
enum RfStatus rf_campaign_run(const struct RfScenario *scenario, struct RfCampaign **out_campaign);

/*
 Releases a campaign. Null is ignored.

 # Safety
 `campaign` must come from this library and not have been freed.
 */
void rf_campaign_free(struct RfCampaign *campaign);

/*
 Judges the requested checks. Writes the report as JSON (free with
 [`rf_string_free`]) and whether every check passed.

 # Safety
 `campaign` must be a live handle and the out-pointers writable.
 */
enum RfStatus rf_campaign_verify(const struct RfCampaign *campaign,
                                 char **out_report_json,
                                 bool *out_all_passed);

/*
 Writes snapshot dumps and CSV time series under `out_dir`.

 # Safety
 `campaign` must be a live handle and `out_dir` a nul-terminated string.
 */
enum RfStatus rf_campaign_simulate(const struct RfCampaign *campaign, const char *out_dir);

/*
 Number of snapshots of the reference trajectory (first kernel, finest level).

 # Safety
 `campaign` must be a live handle and `out` writable.
 */
enum RfStatus rf_campaign_snapshot_count(const struct RfCampaign *campaign, size_t *out_count);

/*
 Time and total chart area of snapshot `index` of the reference trajectory.

 # Safety
 `campaign` must be a live handle and the out-pointers writable.
 */
enum RfStatus rf_campaign_snapshot(const struct RfCampaign *campaign,
                                   size_t index,
                                   double *out_t,
                                   double *out_area);

/*
 Copies the conformal factor of snapshot `index` into `buffer`.

 Values are in chart node order and NaN at nodes outside the computational
 domain. `out_len` receives the field length. With a null `buffer` only the length
 is reported; a buffer shorter than the field is an invalid argument.

 # Safety
 `buffer` must hold `capacity` doubles when non-null and `out_len` be writable.
 */
enum RfStatus rf_campaign_field(const struct RfCampaign *campaign,
                                size_t index,
                                double *buffer,
                                size_t capacity,
                                size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RICCIFLOW_H */
