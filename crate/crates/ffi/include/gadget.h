#ifndef GADGET_H
#define GADGET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GadgetStatus {
  GadgetStatus_Ok = 0,
  GadgetStatus_NullPointer = 1,
  GadgetStatus_Usage = 2,
  GadgetStatus_Data = 3,
  GadgetStatus_Numeric = 4,
  GadgetStatus_InvalidUtf8 = 5,
  GadgetStatus_Panic = 6,
} GadgetStatus;

typedef struct GadgetDataset GadgetDataset;

typedef struct GadgetModel GadgetModel;

typedef struct GadgetTree GadgetTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *gadget_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gadget_version(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void gadget_string_free(char *s);

/**
 * Load a headered CSV; `target` names the response column.
 *
 * # Safety
 * `path` and `target` must be NUL-terminated strings; `out` must be writable.
 */
enum GadgetStatus gadget_dataset_from_csv(const char *path,
                                          const char *target,
                                          struct GadgetDataset **out);

/**
 * Build a numeric dataset from a row-major `n_rows x n_features` matrix.
 *
 * # Safety
 * `x` must point to `n_rows * n_features` doubles and `y` to `n_rows` doubles.
 */
enum GadgetStatus gadget_dataset_from_matrix(const double *x,
                                             uintptr_t n_rows,
                                             uintptr_t n_features,
                                             const double *y,
                                             struct GadgetDataset **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum GadgetStatus gadget_dataset_shape(const struct GadgetDataset *d,
                                       uintptr_t *n_rows,
                                       uintptr_t *n_features);

/**
 * # Safety
 * `d` must be NULL or a handle from this library, freed at most once.
 */
void gadget_dataset_free(struct GadgetDataset *d);

/**
 * Train a learner described by JSON, e.g. `{"kind":"bagged-trees","n_trees":50,"max_depth":10,"min_leaf":3,"seed":1}`.
 *
 * # Safety
 * Pointers must be valid; `spec_json` NUL-terminated.
 */
enum GadgetStatus gadget_model_fit(const struct GadgetDataset *d,
                                   const char *spec_json,
                                   struct GadgetModel **out);

/**
 * Predict `n_rows` rows (row-major) into `out`, which holds `n_rows` doubles.
 *
 * # Safety
 * `x` must hold `n_rows * n_features` doubles and `out` room for `n_rows`.
 */
enum GadgetStatus gadget_model_predict(const struct GadgetModel *m,
                                       const double *x,
                                       uintptr_t n_rows,
                                       uintptr_t n_features,
                                       double *out);

/**
 * # Safety
 * `m` must be NULL or a handle from this library, freed at most once.
 */
void gadget_model_free(struct GadgetModel *m);

/**
 * Grow a tree. `config_json` needs `method` (`"pd"`, `"ale"` or `"sd"`);
 * optional keys: `S`, `Z` (0-based), `max_depth`, `min_node_size`, `gamma`,
 * `grid_size`, `sd_recalculate`, `seed`.
 *
 * # Safety
 * Pointers must be valid; `config_json` NUL-terminated.
 */
enum GadgetStatus gadget_tree_fit(const struct GadgetDataset *d,
                                  const struct GadgetModel *m,
                                  const char *config_json,
                                  struct GadgetTree **out);

/**
 * # Safety
 * `t` must be a live tree handle and `out` writable.
 */
enum GadgetStatus gadget_tree_n_leaves(const struct GadgetTree *t, uintptr_t *out);

/**
 * Tree structure as JSON. `d` must be the dataset the tree was grown on.
 *
 * # Safety
 * Handles must be live; `out` receives a string for `gadget_string_free`.
 */
enum GadgetStatus gadget_tree_json(const struct GadgetTree *t,
                                   const struct GadgetDataset *d,
                                   char **out);

/**
 * Interaction measures of the tree as JSON.
 *
 * # Safety
 * `t` must be live; `out` receives a string for `gadget_string_free`.
 */
enum GadgetStatus gadget_tree_report_json(const struct GadgetTree *t, char **out);

/**
 * Regional effect curves of every leaf as JSON.
 *
 * # Safety
 * Handles must be live; `out` receives a string for `gadget_string_free`.
 */
enum GadgetStatus gadget_tree_curves_json(const struct GadgetTree *t,
                                          const struct GadgetDataset *d,
                                          char **out);

/**
 * # Safety
 * `t` must be NULL or a handle from this library, freed at most once.
 */
void gadget_tree_free(struct GadgetTree *t);

/**
 * Run the permutation interaction test and return the result as JSON.
 * `learner_json` as for `gadget_model_fit`; `config_json` needs `method`
 * and may set `s`, `alpha` and `seed`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum GadgetStatus gadget_pint_json(const struct GadgetDataset *d,
                                   const char *learner_json,
                                   const char *config_json,
                                   char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GADGET_H */
