#ifndef LOADPROMPT_H
#define LOADPROMPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum LpStatus {
  LP_STATUS_OK = 0,
  LP_STATUS_NULL_ARGUMENT = 1,
  LP_STATUS_INVALID_ARGUMENT = 2,
  LP_STATUS_DATA_ERROR = 3,
  LP_STATUS_CODEC_ERROR = 4,
  LP_STATUS_BACKEND_ERROR = 5,
  LP_STATUS_EVAL_ERROR = 6,
  LP_STATUS_PANIC = 7,
} LpStatus;

/**
 * Loaded buildings keyed by id.
 */
typedef struct LpDataset LpDataset;

/**
 * Sentence template handle.
 */
typedef struct LpTemplate LpTemplate;

/**
 * Evaluation settings. Obtain defaults from [`lp_eval_options_default`].
 */
typedef struct LpEvalOptions {
  size_t n;
  size_t m;
  size_t stride;
  size_t train_months;
  size_t val_months;
  size_t test_months;
  size_t max_gap_hours;
  uint32_t retry_limit;
  /**
   * Non-zero for a growing context instead of a sliding one.
   */
  uint8_t growing_context;
} LpEvalOptions;

typedef struct LpMetrics {
  double rmse;
  double mae;
  size_t windows;
  size_t faults;
} LpMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL.
 * Valid until the next call into the library from the same thread.
 */
const char *lp_last_error(void);

/**
 * Frees a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void lp_string_free(char *s);

/**
 * Creates a template. `pattern` may be NULL for the default sentence.
 *
 * # Safety
 * `pattern` is NULL or a valid C string; `out` is a valid pointer.
 */
enum LpStatus lp_template_new(const char *pattern,
                              uint32_t decimals,
                              struct LpTemplate **out_template);

/**
 * # Safety
 * `template` is NULL or came from [`lp_template_new`].
 */
void lp_template_free(struct LpTemplate *template_);

/**
 * Renders one sentence. `timestamp` uses `YYYY-MM-DD HH:00`.
 *
 * # Safety
 * Pointers must be valid; the returned string is freed with [`lp_string_free`].
 */
enum LpStatus lp_template_render(const struct LpTemplate *template_,
                                 const char *timestamp,
                                 double value,
                                 char **out_sentence);

/**
 * Parses a sentence that matches the template exactly.
 *
 * # Safety
 * Pointers must be valid; the timestamp string is freed with [`lp_string_free`].
 */
enum LpStatus lp_template_parse(const struct LpTemplate *template_,
                                const char *sentence,
                                char **out_timestamp,
                                double *out_value);

/**
 * Extracts the last number in free-form text.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LpStatus lp_parse_lenient(const char *sentence, double *out_value);

/**
 * Reads a `timestamp,building_id,consumption_kwh` CSV file.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LpStatus lp_dataset_load_csv(const char *path, struct LpDataset **out_dataset);

/**
 * Generates `buildings` synthetic series of `days` days.
 *
 * # Safety
 * `out_dataset` must be valid.
 */
enum LpStatus lp_dataset_synth(uint64_t seed,
                               size_t days,
                               size_t buildings,
                               struct LpDataset **out_dataset);

/**
 * # Safety
 * `dataset` is NULL or came from a `lp_dataset_*` constructor.
 */
void lp_dataset_free(struct LpDataset *dataset);

/**
 * Number of buildings, or 0 for NULL.
 *
 * # Safety
 * `dataset` is NULL or valid.
 */
size_t lp_dataset_len(const struct LpDataset *dataset);

/**
 * Building id at `index` in sorted order.
 *
 * # Safety
 * Pointers must be valid; the result is freed with [`lp_string_free`].
 */
enum LpStatus lp_dataset_building_id(const struct LpDataset *dataset, size_t index, char **out_id);

/**
 * Number of hourly records for one building.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LpStatus lp_dataset_series_len(const struct LpDataset *dataset,
                                    const char *building,
                                    size_t *out_len);

struct LpEvalOptions lp_eval_options_default(void);

/**
 * Scores one backend on one building's test split.
 *
 * `template` and `options` may be NULL for defaults.
 *
 * # Safety
 * Non-NULL pointers must be valid.
 */
enum LpStatus lp_evaluate(const struct LpDataset *dataset,
                          const char *building,
                          const char *backend,
                          const struct LpTemplate *template_,
                          const struct LpEvalOptions *options,
                          struct LpMetrics *out_metrics);

/**
 * Forecasts test window `window` and returns its audit record as JSON.
 *
 * # Safety
 * Non-NULL pointers must be valid; the result is freed with [`lp_string_free`].
 */
enum LpStatus lp_forecast_json(const struct LpDataset *dataset,
                               const char *building,
                               const char *backend,
                               const struct LpTemplate *template_,
                               const struct LpEvalOptions *options,
                               size_t window,
                               char **out_json);

/**
 * Root mean squared error of two arrays of length `len`.
 *
 * # Safety
 * Both arrays hold at least `len` values.
 */
enum LpStatus lp_rmse(const double *pred, const double *truth, size_t len, double *out_value);

/**
 * Mean absolute error of two arrays of length `len`.
 *
 * # Safety
 * Both arrays hold at least `len` values.
 */
enum LpStatus lp_mae(const double *pred, const double *truth, size_t len, double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOADPROMPT_H */
