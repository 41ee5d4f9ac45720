#ifndef ERRULES_H
#define ERRULES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call.
 */
typedef enum ErStatus {
  ER_STATUS_OK = 0,
  ER_STATUS_NULL_ARGUMENT = 1,
  ER_STATUS_INVALID_UTF8 = 2,
  ER_STATUS_IO = 3,
  /**
   * Malformed schema, data or bias document.
   */
  ER_STATUS_FORMAT = 4,
  ER_STATUS_PARSE = 5,
  ER_STATUS_NOT_SAFE = 6,
  ER_STATUS_NOT_ER = 7,
  ER_STATUS_NOT_VALID = 8,
  ER_STATUS_EMPTY_DOMAIN = 9,
  ER_STATUS_ZERO_ANTECEDENT = 10,
  /**
   * Any other evaluation or usage failure.
   */
  ER_STATUS_QUERY = 11,
  ER_STATUS_PANIC = 12,
} ErStatus;

/**
 * Opaque session handle.
 */
typedef struct ErSession ErSession;

/**
 * A frequency `numerator / denominator`; `value_*` is the reduced form.
 */
typedef struct ErFrequency {
  uint64_t numerator;
  uint64_t denominator;
  uint64_t value_numerator;
  uint64_t value_denominator;
} ErFrequency;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Owned by the
 * library; valid until the next call on this thread.
 */
const char *er_last_error(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void er_string_free(char *s);

/**
 * Library version, static.
 */
const char *er_version(void);

/**
 * Load a schema, a data directory and optionally a query file (`queries`
 * may be null). On success `*out` receives a handle for [`er_session_free`].
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum ErStatus er_session_open(const char *schema_path,
                              const char *data_dir,
                              const char *queries_path,
                              struct ErSession **out);

/**
 * # Safety
 * `s` must be null or a handle from [`er_session_open`] not yet freed.
 */
void er_session_free(struct ErSession *s);

/**
 * Add `name(vars) := body;` declarations. All or nothing.
 *
 * # Safety
 * `s` must be a live handle; `decls` NUL-terminated.
 */
enum ErStatus er_session_define(struct ErSession *s, const char *decls);

/**
 * Number of registered queries, or 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
size_t er_session_query_count(const struct ErSession *s);

/**
 * Safety, ER and validity report. `*passed` is set whether or not the query
 * passes; `report` may be null if the text is not wanted.
 *
 * # Safety
 * `s` must be a live handle; `query` NUL-terminated; `passed` writable;
 * `report` null or writable.
 */
enum ErStatus er_check(const struct ErSession *s, const char *query, bool *passed, char **report);

/**
 * Answer tuples as CSV with a header row.
 *
 * # Safety
 * `s` must be a live handle; `query` NUL-terminated; `csv` writable.
 */
enum ErStatus er_eval(const struct ErSession *s, const char *query, char **csv);

/**
 * Reference domain of the query's head as CSV.
 *
 * # Safety
 * As for [`er_eval`].
 */
enum ErStatus er_domain(const struct ErSession *s, const char *query, char **csv);

/**
 * Frequency of a safe ER query valid for its head.
 *
 * # Safety
 * `s` must be a live handle; `query` NUL-terminated; `out` writable.
 */
enum ErStatus er_frequency(const struct ErSession *s, const char *query, struct ErFrequency *out);

/**
 * Support and confidence of `antecedent -> consequent`.
 *
 * # Safety
 * `s` must be a live handle; strings NUL-terminated; outputs writable.
 */
enum ErStatus er_rule(const struct ErSession *s,
                      const char *antecedent,
                      const char *consequent,
                      struct ErFrequency *support_out,
                      struct ErFrequency *confidence_out);

/**
 * Mine with a JSON language bias; `*csv` receives
 * `query,support,confidence` rows. A zero `min_confidence_den` skips rule
 * generation.
 *
 * # Safety
 * `s` must be a live handle; `bias_json` NUL-terminated; `csv` writable.
 */
enum ErStatus er_mine(const struct ErSession *s,
                      const char *bias_json,
                      uint64_t min_support_num,
                      uint64_t min_support_den,
                      uint64_t min_confidence_num,
                      uint64_t min_confidence_den,
                      char **csv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ERRULES_H */
