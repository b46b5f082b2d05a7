#ifndef TSN_SWITCH_H
#define TSN_SWITCH_H

/* Generated by cbindgen from tsn-switch-ffi. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum TsnStatus {
  // Success; out-parameters are valid.
  TSN_STATUS_OK = 0,
  // A required pointer argument was NULL.
  TSN_STATUS_NULL_ARGUMENT = 1,
  // An input string was not valid UTF-8.
  TSN_STATUS_INVALID_UTF8 = 2,
  // Scenario JSON failed to parse or validate; see `tsn_last_error`.
  TSN_STATUS_PARSE_ERROR = 3,
  // The request is well-formed but has no feasible answer (no certificate,
  // overloaded T-vector, or an override that does not certify the flows).
  TSN_STATUS_INFEASIBLE = 4,
  // The switch order is outside the supported range for this operation.
  TSN_STATUS_UNSUPPORTED_SIZE = 5,
  // The simulation failed; see `tsn_last_error`.
  TSN_STATUS_SIMULATION_ERROR = 6,
} TsnStatus;

// Opaque parsed-scenario handle.
typedef struct TsnScenario TsnScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string. Never free it.
const char *tsn_version(void);

// Message for the most recent failure on the calling thread, or NULL if no
// failure has occurred. Valid until the next failing call on this thread;
// never free it.
const char *tsn_last_error(void);

// Releases a string allocated by this library.
//
// # Safety
// `text` must be NULL or a pointer previously returned through a `char**`
// out-parameter of this library, not yet freed.
void tsn_string_free(char *text);

// Parses and validates scenario JSON into an opaque handle.
//
// # Safety
// `json` must be a NUL-terminated string; `out_scenario` must be a valid
// pointer. On `TSN_STATUS_OK` the caller owns the handle and must release it
// with [`tsn_scenario_free`].
enum TsnStatus tsn_scenario_parse(const char *json, struct TsnScenario **out_scenario);

// Releases a scenario handle.
//
// # Safety
// `scenario` must be NULL or a handle from [`tsn_scenario_parse`] not yet
// freed.
void tsn_scenario_free(struct TsnScenario *scenario);

// Checks the all-periods-at-least-N admission condition over the scenario's
// full flow list.
//
// # Safety
// `scenario` must be a live handle from [`tsn_scenario_parse`]; `out_holds`
// must be a valid pointer.
enum TsnStatus tsn_check_sc1(const struct TsnScenario *scenario, bool *out_holds);

// Searches for a decomposition/T-vector certificate over the scenario's full
// flow list. On `TSN_STATUS_OK`, `*out_feasible` says whether one exists;
// if it does and `out_certificate_json` is non-NULL, `*out_certificate_json`
// receives the certificate as JSON (`latin_rows`, `t_vector` with `null`
// meaning never scheduled). Returns `TSN_STATUS_UNSUPPORTED_SIZE` for
// switches too large for the exhaustive search.
//
// # Safety
// `scenario` must be a live handle from [`tsn_scenario_parse`];
// `out_feasible` must be valid; `out_certificate_json` may be NULL.
enum TsnStatus tsn_check_sc2(const struct TsnScenario *scenario,
                             bool *out_feasible,
                             char **out_certificate_json);

// Runs a scenario and returns the simulation report as pretty-printed JSON.
//
// # Safety
// `scenario` must be a live handle from [`tsn_scenario_parse`];
// `out_report_json` must be valid. On `TSN_STATUS_OK` the caller frees
// `*out_report_json` with [`tsn_string_free`].
enum TsnStatus tsn_simulate(const struct TsnScenario *scenario, char **out_report_json);

// Like [`tsn_simulate`], additionally returning the per-slot trace as CSV
// (header line included).
//
// # Safety
// As [`tsn_simulate`]; `out_trace_csv` must also be valid, and on
// `TSN_STATUS_OK` the caller frees both strings with [`tsn_string_free`].
enum TsnStatus tsn_simulate_with_trace(const struct TsnScenario *scenario,
                                       char **out_report_json,
                                       char **out_trace_csv);

// Number of flow decomposition sets of order `n` (supported for 2 ≤ n ≤ 7).
//
// # Safety
// `out_count` must be a valid pointer.
enum TsnStatus tsn_count_decompositions(uint32_t n, uint64_t *out_count);

// Computes the single-processor EDF service order for a set of periodic
// tasks. `periods[k]` is task k's period in slots, with 0 meaning the task
// is never scheduled. Fills `out_tasks[0..out_len]` with 0 for an idle slot
// and k+1 when task k is served. Fails with `TSN_STATUS_INFEASIBLE` when the
// periods overload the processor (utilization above 1).
//
// # Safety
// `periods` must point to `n_tasks` readable elements and `out_tasks` to
// `out_len` writable elements (either may be NULL when its length is 0).
enum TsnStatus tsn_edf_trace(const uint64_t *periods,
                             uintptr_t n_tasks,
                             int32_t *out_tasks,
                             uintptr_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSN_SWITCH_H */
