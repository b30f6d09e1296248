#ifndef COUPLED_SPLITTING_H
#define COUPLED_SPLITTING_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values are stable.
 */
typedef enum CsStatus {
  CsStatus_Ok = 0,
  CsStatus_NullPointer = 1,
  CsStatus_InvalidUtf8 = 2,
  /**
   * Malformed JSON or an instance that fails structural validation.
   */
  CsStatus_InvalidInstance = 3,
  CsStatus_InvalidParameter = 4,
  /**
   * A convergence or well-posedness condition does not hold.
   */
  CsStatus_ConditionViolated = 5,
  CsStatus_Unsupported = 6,
  CsStatus_Numerical = 7,
  CsStatus_BufferTooSmall = 8,
  CsStatus_Panic = 99,
} CsStatus;

/**
 * Terminal state of a solver run.
 */
typedef enum CsRunStatus {
  CsRunStatus_Converged = 0,
  CsRunStatus_MaxIter = 1,
  CsRunStatus_Diverged = 2,
} CsRunStatus;

typedef struct CsInstance CsInstance;

typedef struct CsReport CsReport;

typedef struct CsTrace CsTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null. Owned by the
 * library; valid until the next failing call.
 */
const char *cs_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void cs_string_free(char *s);

/**
 * Parses an instance document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CsStatus cs_instance_from_json(const char *json, struct CsInstance **out);

/**
 * # Safety
 * `inst` must be null or a handle from [`cs_instance_from_json`].
 */
void cs_instance_free(struct CsInstance *inst);

/**
 * Number of blocks, total primal dimension and number of constraints.
 *
 * # Safety
 * Pointers must be valid.
 */
enum CsStatus cs_instance_dims(const struct CsInstance *inst,
                               uintptr_t *n,
                               uintptr_t *d,
                               uintptr_t *m);

/**
 * Runs `variant` (`admm2`, `admm2_linearized`, `admm_cyclic_n`, `bcd` or
 * `bcpg`) from the instance's starting point. A diverged run still returns a
 * trace; check [`cs_trace_status`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum CsStatus cs_solve(const struct CsInstance *inst,
                       const char *variant,
                       double beta,
                       double gamma,
                       double tol,
                       uintptr_t max_iter,
                       struct CsTrace **out);

/**
 * # Safety
 * `trace` must be null or a handle from [`cs_solve`].
 */
void cs_trace_free(struct CsTrace *trace);

/**
 * # Safety
 * Pointers must be valid.
 */
enum CsStatus cs_trace_status(const struct CsTrace *trace, enum CsRunStatus *status);

/**
 * # Safety
 * Pointers must be valid.
 */
enum CsStatus cs_trace_iterations(const struct CsTrace *trace, uintptr_t *k);

/**
 * Largest residual component of the final record.
 *
 * # Safety
 * Pointers must be valid.
 */
enum CsStatus cs_trace_residual(const struct CsTrace *trace, double *value);

/**
 * Final primal iterate.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum CsStatus cs_trace_x(const struct CsTrace *trace,
                         double *buf,
                         uintptr_t len,
                         uintptr_t *written);

/**
 * Final multiplier.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum CsStatus cs_trace_mu(const struct CsTrace *trace,
                          double *buf,
                          uintptr_t len,
                          uintptr_t *written);

/**
 * # Safety
 * Pointers must be valid.
 */
enum CsStatus cs_trace_to_csv(const struct CsTrace *trace, char **out);

/**
 * Builds the expected randomly permuted update and its spectral checks.
 *
 * # Safety
 * Pointers must be valid.
 */
enum CsStatus cs_analyze(const struct CsInstance *inst, double beta, struct CsReport **out);

/**
 * # Safety
 * `report` must be null or a handle from [`cs_analyze`].
 */
void cs_report_free(struct CsReport *report);

/**
 * # Safety
 * Pointers must be valid.
 */
enum CsStatus cs_report_spectral_radius(const struct CsReport *report, double *rho);

/**
 * Looks up a verdict by its report key (`lemma_3_1`, ..., `prop_3_1`).
 * Writes 1 (holds), 0 (fails) or -1 (not applicable).
 *
 * # Safety
 * Pointers must be valid.
 */
enum CsStatus cs_report_verdict(const struct CsReport *report, const char *name, int32_t *value);

/**
 * # Safety
 * Pointers must be valid.
 */
enum CsStatus cs_report_to_json(const struct CsReport *report, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COUPLED_SPLITTING_H */
