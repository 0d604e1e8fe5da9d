#ifndef QPOST_H
#define QPOST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QpostStatus {
  QPOST_STATUS_OK = 0,
  QPOST_STATUS_NULL_POINTER = 1,
  QPOST_STATUS_INVALID_ARGUMENT = 2,
  QPOST_STATUS_INVALID_UTF8 = 3,
  QPOST_STATUS_IO = 4,
  /**
   * The distribution is a point mass and has no density.
   */
  QPOST_STATUS_DEGENERATE = 5,
  /**
   * A panic was caught; the library state is unaffected.
   */
  QPOST_STATUS_INTERNAL = 6,
} QpostStatus;

/**
 * A predictive distribution built from a quantile vector.
 */
typedef struct QpostCdf QpostCdf;

/**
 * A trained quantile regression forest.
 */
typedef struct QpostForest QpostForest;

typedef struct QpostForestConfig {
  size_t num_trees;
  size_t mtry;
  size_t min_node_size;
  size_t sample_count;
  uint64_t seed;
  bool replace;
} QpostForestConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a
 * successful call. Valid until the next qpost call on this thread.
 */
const char *qpost_last_error_message(void);

/**
 * The library's default forest settings.
 */
struct QpostForestConfig qpost_forest_config_default(void);

/**
 * Trains a forest on `n_rows` rows of (lead hours, model label, error).
 *
 * # Safety
 * `leads`, `labels` and `errors` must each point to `n_rows` elements;
 * every label must be a nul-terminated string. `out_forest` must be writable.
 */
enum QpostStatus qpost_forest_train(const uint32_t *leads,
                                    const char *const *labels,
                                    const double *errors,
                                    size_t n_rows,
                                    struct QpostForestConfig config,
                                    struct QpostForest **out_forest);

/**
 * Loads a forest saved by [`qpost_forest_save`] or the command line tool.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out_forest` writable.
 */
enum QpostStatus qpost_forest_load(const char *path, struct QpostForest **out_forest);

/**
 * # Safety
 * `forest` must be a live handle and `path` a nul-terminated string.
 */
enum QpostStatus qpost_forest_save(const struct QpostForest *forest, const char *path);

/**
 * Conditional error quantiles at `n_levels` increasing levels for one
 * (lead hours, model label) query, written to `out_values`.
 *
 * # Safety
 * `forest` must be a live handle, `label` a nul-terminated string, and
 * `levels` and `out_values` must each hold `n_levels` elements.
 */
enum QpostStatus qpost_forest_predict_quantiles(const struct QpostForest *forest,
                                                uint32_t lead_hours,
                                                const char *label,
                                                const double *levels,
                                                size_t n_levels,
                                                double *out_values);

/**
 * Whether the forest saw `label` in training; unknown labels are
 * predicted as if they matched no label split.
 *
 * # Safety
 * `forest` must be a live handle and `label` a nul-terminated string.
 */
enum QpostStatus qpost_forest_knows_label(const struct QpostForest *forest,
                                          const char *label,
                                          bool *out_known);

/**
 * # Safety
 * `forest` must be null or a handle not yet freed.
 */
void qpost_forest_free(struct QpostForest *forest);

/**
 * Level-by-level mean of `n_inputs` quantile vectors sharing `levels`.
 * `values` is row-major, one row of `n_levels` values per input.
 *
 * # Safety
 * `levels` and `out_values` must hold `n_levels` elements and `values`
 * `n_inputs * n_levels`.
 */
enum QpostStatus qpost_vincentize(const double *levels,
                                  size_t n_levels,
                                  const double *values,
                                  size_t n_inputs,
                                  double *out_values);

/**
 * Builds a distribution from `n` (level, value) pairs.
 *
 * # Safety
 * `levels` and `values` must hold `n` elements; `out_cdf` must be writable.
 */
enum QpostStatus qpost_cdf_build(const double *levels,
                                 const double *values,
                                 size_t n,
                                 struct QpostCdf **out_cdf);

/**
 * `P(X <= x)`.
 *
 * # Safety
 * `cdf` must be a live handle and `out_value` writable.
 */
enum QpostStatus qpost_cdf_eval(const struct QpostCdf *cdf, double x, double *out_value);

/**
 * Inverse CDF for `p` in (0, 1).
 *
 * # Safety
 * `cdf` must be a live handle and `out_value` writable.
 */
enum QpostStatus qpost_cdf_quantile(const struct QpostCdf *cdf, double p, double *out_value);

/**
 * Density at `x`; `QPOST_STATUS_DEGENERATE` for a point mass.
 *
 * # Safety
 * `cdf` must be a live handle and `out_value` writable.
 */
enum QpostStatus qpost_cdf_density(const struct QpostCdf *cdf, double x, double *out_value);

/**
 * `P(X < threshold)`.
 *
 * # Safety
 * `cdf` must be a live handle and `out_value` writable.
 */
enum QpostStatus qpost_cdf_prob_below(const struct QpostCdf *cdf,
                                      double threshold,
                                      double *out_value);

/**
 * Continuous ranked probability score against observation `y`.
 *
 * # Safety
 * `cdf` must be a live handle and `out_value` writable.
 */
enum QpostStatus qpost_cdf_crps(const struct QpostCdf *cdf, double y, double *out_value);

/**
 * Negative log density at `y`; `QPOST_STATUS_DEGENERATE` for a point mass.
 *
 * # Safety
 * `cdf` must be a live handle and `out_value` writable.
 */
enum QpostStatus qpost_cdf_log_score(const struct QpostCdf *cdf, double y, double *out_value);

/**
 * Writes `n` seeded draws to `out_values`.
 *
 * # Safety
 * `cdf` must be a live handle and `out_values` must hold `n` elements.
 */
enum QpostStatus qpost_cdf_sample(const struct QpostCdf *cdf,
                                  size_t n,
                                  uint64_t seed,
                                  double *out_values);

/**
 * # Safety
 * `cdf` must be null or a handle not yet freed.
 */
void qpost_cdf_free(struct QpostCdf *cdf);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QPOST_H */
