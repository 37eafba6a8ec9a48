#ifndef PREFOPT_H
#define PREFOPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum PrefoptStatus {
  PREFOPT_STATUS_OK = 0,
  PREFOPT_STATUS_NULL_POINTER = 1,
  PREFOPT_STATUS_INVALID_UTF8 = 2,
  PREFOPT_STATUS_CONFIG = 3,
  PREFOPT_STATUS_INVALID_ARGUMENT = 4,
  PREFOPT_STATUS_RUNTIME = 5,
  PREFOPT_STATUS_IO = 6,
  PREFOPT_STATUS_NOT_FOUND = 7,
  PREFOPT_STATUS_PANIC = 8,
} PrefoptStatus;

// Opaque experiment configuration.
typedef struct PrefoptConfig PrefoptConfig;

// Opaque result of a completed experiment.
typedef struct PrefoptRunRecord PrefoptRunRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *prefopt_version(void);

// Message of the most recent failure on this thread; empty after a success.
// The pointer stays valid until the next call into this library on the same thread.
const char *prefopt_last_error_message(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void prefopt_string_free(char *s);

// Default configuration for `env` (`linear_matched`, `linear_flipped`, `neural`).
//
// # Safety
// `env` must be a NUL-terminated string; `out` must be writable.
enum PrefoptStatus prefopt_config_default(const char *env, struct PrefoptConfig **out);

// Parses a config document.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum PrefoptStatus prefopt_config_from_str(const char *text, struct PrefoptConfig **out);

// Applies one `key = value` override. On failure the config is unchanged.
//
// # Safety
// `cfg` must be a live config; `key` and `value` NUL-terminated strings.
enum PrefoptStatus prefopt_config_set(struct PrefoptConfig *cfg,
                                      const char *key,
                                      const char *value);

// Renders the config as a replayable document.
//
// # Safety
// `cfg` must be a live config; `out` must be writable.
enum PrefoptStatus prefopt_config_to_string(const struct PrefoptConfig *cfg, char **out);

// # Safety
// `cfg` must come from this library and not have been freed. Null is ignored.
void prefopt_config_free(struct PrefoptConfig *cfg);

// Runs every configured seed on `jobs` threads (0 = all cores).
//
// # Safety
// `cfg` must be a live config; `out` must be writable.
enum PrefoptStatus prefopt_run_experiment(const struct PrefoptConfig *cfg,
                                          uint32_t jobs,
                                          struct PrefoptRunRecord **out);

// Number of method entries (one per RMB-PO+ prompt-set size).
//
// # Safety
// `rec` must be a live record or null (returns 0).
uintptr_t prefopt_record_method_count(const struct PrefoptRunRecord *rec);

// Label of method entry `index`, e.g. `rmb_po` or `rmb_po_plus(m=100)`.
//
// # Safety
// `rec` must be a live record; `out` must be writable.
enum PrefoptStatus prefopt_record_method_label(const struct PrefoptRunRecord *rec,
                                               uintptr_t index,
                                               char **out);

// Trimmed-mean optimality gap of `label`, or the raw mean below three seeds.
//
// # Safety
// `rec` must be a live record; `label` NUL-terminated; `out` writable.
enum PrefoptStatus prefopt_record_trimmed_gap(const struct PrefoptRunRecord *rec,
                                              const char *label,
                                              double *out);

// summary.json contents.
//
// # Safety
// `rec` must be a live record; `out` must be writable.
enum PrefoptStatus prefopt_record_summary_json(const struct PrefoptRunRecord *rec, char **out);

// results.csv contents.
//
// # Safety
// `rec` must be a live record; `out` must be writable.
enum PrefoptStatus prefopt_record_results_csv(const struct PrefoptRunRecord *rec, char **out);

// Writes all artifacts (CSV, JSON, config snapshot, figures) under `dir`.
//
// # Safety
// `rec` must be a live record; `dir` NUL-terminated.
enum PrefoptStatus prefopt_record_write(const struct PrefoptRunRecord *rec, const char *dir);

// # Safety
// `rec` must come from this library and not have been freed. Null is ignored.
void prefopt_record_free(struct PrefoptRunRecord *rec);

// Randomized check of the RMB-PO regret bound; writes the violation count.
//
// # Safety
// `violations` must be writable.
enum PrefoptStatus prefopt_prop1_campaign(uintptr_t size,
                                          uintptr_t max_states,
                                          uintptr_t max_actions,
                                          uint64_t seed,
                                          uintptr_t *violations);

// Mean after dropping one minimum and one maximum; needs `len >= 3`.
//
// # Safety
// `values` must point to `len` readable doubles; `out` must be writable.
enum PrefoptStatus prefopt_trimmed_mean(const double *values, uintptr_t len, double *out);

// Name of a built-in environment by index (0..3), or null past the end.
const char *prefopt_env_name(uintptr_t index);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PREFOPT_H */
