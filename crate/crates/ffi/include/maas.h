#ifndef MAAS_H
#define MAAS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MaasStatus {
  MAAS_STATUS_OK = 0,
  MAAS_STATUS_ERROR = 1,
  MAAS_STATUS_NOT_CONVERGED = 2,
  MAAS_STATUS_INFEASIBLE = 3,
  MAAS_STATUS_CONFIG = 4,
  MAAS_STATUS_NULL_POINTER = 5,
  /**
   * A required earlier step has not run.
   */
  MAAS_STATUS_STATE = 6,
  MAAS_STATUS_BUFFER_TOO_SMALL = 7,
  MAAS_STATUS_PANIC = 8,
} MaasStatus;

/**
 * Opaque session handle.
 */
typedef struct MaasSession MaasSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a session from a run configuration in JSON.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be writable.
 */
enum MaasStatus maas_session_new(const char *config_json, struct MaasSession **out);

/**
 * # Safety
 * `h` must come from `maas_session_new` and not be used afterwards.
 */
void maas_session_free(struct MaasSession *h);

/**
 * Number of OD pairs, the length of every per-OD array.
 *
 * # Safety
 * `h` must be a live session and `out` writable.
 */
enum MaasStatus maas_od_count(struct MaasSession *h, size_t *out);

/**
 * Solves the scenario without the platform. Returns `NotConverged` when the
 * outer loop hit its limit; the result is still stored.
 *
 * # Safety
 * `h` must be a live session.
 */
enum MaasStatus maas_solve_base(struct MaasSession *h);

/**
 * Solves the MaaS assignment from the stored base.
 *
 * # Safety
 * `h` must be a live session.
 */
enum MaasStatus maas_solve_assignment(struct MaasSession *h);

/**
 * Optimal pricing at capacity price weight `eta`.
 *
 * # Safety
 * `h` must be a live session.
 */
enum MaasStatus maas_solve_pricing(struct MaasSession *h, double eta);

/**
 * Copies the MaaS demand per OD into `out` (at least `maas_od_count` slots).
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum MaasStatus maas_assignment_demand(struct MaasSession *h, double *out, size_t len);

/**
 * Total system travel time of the stored assignment.
 *
 * # Safety
 * `h` must be a live session and `out` writable.
 */
enum MaasStatus maas_assignment_objective(struct MaasSession *h, double *out);

/**
 * Capacity price `ps` and platform profit of the stored pricing.
 *
 * # Safety
 * `h` must be a live session; `ps` and `profit` writable.
 */
enum MaasStatus maas_pricing_result(struct MaasSession *h, double *ps, double *profit);

/**
 * Per-OD trip fares of the stored pricing.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum MaasStatus maas_pricing_fares(struct MaasSession *h, double *out, size_t len);

/**
 * Stored assignment as JSON. Free the string with `maas_string_free`.
 *
 * # Safety
 * `h` must be a live session and `out` writable.
 */
enum MaasStatus maas_assignment_json(struct MaasSession *h, char **out);

/**
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void maas_string_free(char *s);

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call on the same thread.
 */
const char *maas_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAAS_H */
