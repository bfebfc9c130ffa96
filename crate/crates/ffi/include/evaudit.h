#ifndef EVAUDIT_H
#define EVAUDIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EvStatus {
  EV_STATUS_OK = 0,
  EV_STATUS_NULL_ARGUMENT = 1,
  EV_STATUS_INVALID_UTF8 = 2,
  EV_STATUS_INVALID_INPUT = 3,
  EV_STATUS_PARSE_ERROR = 4,
  EV_STATUS_IO_ERROR = 5,
  EV_STATUS_VERIFY_FAILED = 6,
  EV_STATUS_PANIC = 99,
} EvStatus;

typedef enum EvPairDecision {
  EV_PAIR_DECISION_LEFT_WINS = 0,
  EV_PAIR_DECISION_RIGHT_WINS = 1,
  EV_PAIR_DECISION_UNRESOLVED = 2,
} EvPairDecision;

/**
 * Three-valued truth: and is min, or is max.
 */
typedef enum EvTruth {
  EV_TRUTH_FALSE = 0,
  EV_TRUTH_UNDETERMINED = 1,
  EV_TRUTH_TRUE = 2,
} EvTruth;

/**
 * Locked checklist read from disk.
 */
typedef struct EvLock EvLock;

/**
 * Parsed checklist predicate.
 */
typedef struct EvPredicate EvPredicate;

/**
 * Exact bounds as reduced fractions.
 */
typedef struct EvBound {
  uint64_t lower_num;
  uint64_t lower_den;
  uint64_t upper_num;
  uint64_t upper_den;
  uint64_t width_num;
  uint64_t width_den;
} EvBound;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into this library from the same thread.
 */
const char *ev_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void ev_string_free(char *s);

/**
 * Bounds `[P/N, (P+U)/N]` and width `U/N` for one cell. Fails on N = 0.
 *
 * # Safety
 * `out_bound` must be a valid pointer.
 */
enum EvStatus ev_bounds(uint64_t p, uint64_t f, uint64_t u, struct EvBound *out_bound);

/**
 * `num/den` as a percentage with one decimal, rounded half up. The
 * string is released with [`ev_string_free`].
 *
 * # Safety
 * `out_text` must be a valid pointer.
 */
enum EvStatus ev_percent(uint64_t num, uint64_t den, char **out_text);

/**
 * Strict-separation comparison of two cells given as P/F/U counts.
 *
 * # Safety
 * `out_decision` must be a valid pointer.
 */
enum EvStatus ev_pairwise(uint64_t left_p,
                          uint64_t left_f,
                          uint64_t left_u,
                          uint64_t right_p,
                          uint64_t right_f,
                          uint64_t right_u,
                          enum EvPairDecision *out_decision);

/**
 * Parses predicate source text into a handle.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out_predicate` a valid pointer.
 */
enum EvStatus ev_predicate_parse(const char *text, struct EvPredicate **out_predicate);

/**
 * Evaluates a predicate over structured artifacts given as a JSON object
 * mapping role to content. Absent roles evaluate as undetermined.
 *
 * # Safety
 * `predicate` must be a live handle; `artifacts_json` a NUL-terminated
 * string; `out_truth` a valid pointer.
 */
enum EvStatus ev_predicate_eval(const struct EvPredicate *predicate,
                                const char *artifacts_json,
                                enum EvTruth *out_truth);

/**
 * # Safety
 * `predicate` must be null or a handle from [`ev_predicate_parse`], not yet freed.
 */
void ev_predicate_free(struct EvPredicate *predicate);

/**
 * Reads a lock file. Parsing does not check the hash; see [`ev_lock_verify`].
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_lock` a valid pointer.
 */
enum EvStatus ev_lock_open(const char *path, struct EvLock **out_lock);

/**
 * Recomputes the checklist hash. Returns `EV_STATUS_VERIFY_FAILED` when it
 * does not match the recorded lock hash.
 *
 * # Safety
 * `lock` must be a live handle.
 */
enum EvStatus ev_lock_verify(const struct EvLock *lock);

/**
 * Recorded lock hash as lowercase hex, released with [`ev_string_free`].
 *
 * # Safety
 * `lock` must be a live handle; `out_hash` a valid pointer.
 */
enum EvStatus ev_lock_hash(const struct EvLock *lock, char **out_hash);

/**
 * # Safety
 * `lock` must be null or a handle from [`ev_lock_open`], not yet freed.
 */
void ev_lock_free(struct EvLock *lock);

/**
 * Checks a ledger's hash chain and canonical form; reports the entry count.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out_entries` a valid pointer.
 */
enum EvStatus ev_ledger_verify(const char *text, uint64_t *out_entries);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVAUDIT_H */
