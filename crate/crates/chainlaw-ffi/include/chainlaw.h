#ifndef CHAINLAW_H
#define CHAINLAW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum {
  ChainlawOk = 0,
  ChainlawNullPointer = 1,
  ChainlawValidationError = 2,
  ChainlawParseError = 3,
  ChainlawInfeasible = 4,
  ChainlawInternalError = 5,
} ChainlawStatus;

/**
 * Opaque handle around a parsed and resolved chain specification.
 */
typedef struct ChainlawSpec ChainlawSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; do not free.
 */
const char *chainlaw_version(void);

/**
 * Returns the last error message for this thread as an owned string, or
 * NULL when no error has occurred. Free with [`chainlaw_string_free`].
 */
char *chainlaw_last_error_message(void);

/**
 * Parses a JSON chain specification into a handle.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out_spec` a valid
 * writable pointer. On success the caller owns the handle and must release
 * it with [`chainlaw_spec_free`].
 */
ChainlawStatus chainlaw_spec_parse(const char *json, ChainlawSpec **out_spec);

/**
 * Releases a spec handle. NULL is ignored.
 *
 * # Safety
 * `spec` must be NULL or a pointer previously returned by
 * [`chainlaw_spec_parse`] that has not been freed.
 */
void chainlaw_spec_free(ChainlawSpec *spec);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must be NULL or a pointer previously returned by a chainlaw call
 * that has not been freed.
 */
void chainlaw_string_free(char *s);

/**
 * Validates the spec's model invariants. Writes a JSON report
 * `{"violations": [...]}` and returns `ChainlawOk` when the report is
 * empty, `ChainlawValidationError` otherwise.
 *
 * # Safety
 * `spec` must be a live handle from [`chainlaw_spec_parse`] and `out_json`
 * a valid writable pointer.
 */
ChainlawStatus chainlaw_validate(const ChainlawSpec *spec, char **out_json);

/**
 * Entrance-law uniqueness analysis; the JSON report carries the verdict,
 * the diameter trace and the deepest vertex set.
 *
 * # Safety
 * `spec` must be a live handle from [`chainlaw_spec_parse`] and `out_json`
 * a valid writable pointer.
 */
ChainlawStatus chainlaw_entrance(const ChainlawSpec *spec,
                                 int64_t depth,
                                 double tol,
                                 char **out_json);

/**
 * Exact band probabilities for the spec's tail event, with optional
 * empirical cross-check (`simulate_n > 0` enables simulation).
 *
 * # Safety
 * `spec` must be a live handle from [`chainlaw_spec_parse`] and `out_json`
 * a valid writable pointer.
 */
ChainlawStatus chainlaw_zeroone(const ChainlawSpec *spec,
                                uint64_t simulate_n,
                                uint64_t seed,
                                char **out_json);

/**
 * Tightness verdicts, uniform table, walk bounds and truncation defects
 * for a countable-family spec.
 *
 * # Safety
 * `spec` must be a live handle from [`chainlaw_spec_parse`] and `out_json`
 * a valid writable pointer.
 */
ChainlawStatus chainlaw_countable(const ChainlawSpec *spec, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHAINLAW_H */
