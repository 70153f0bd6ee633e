#ifndef MEC_H
#define MEC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MecStatus {
  MEC_STATUS_OK = 0,
  MEC_STATUS_NULL_POINTER = 1,
  MEC_STATUS_INVALID_UTF8 = 2,
  MEC_STATUS_IO = 3,
  MEC_STATUS_PARSE = 4,
  MEC_STATUS_SCHEMA = 5,
  MEC_STATUS_CONSISTENCY = 6,
  MEC_STATUS_VALUE = 7,
  MEC_STATUS_CONFIG = 8,
  MEC_STATUS_INTERNAL = 9,
  MEC_STATUS_PANIC = 10,
} MecStatus;

/**
 * A loaded and validated run bundle.
 */
typedef struct MecBundle MecBundle;

/**
 * Visual clusters of one bundle.
 */
typedef struct MecClusters MecClusters;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *mec_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mec_version(void);

/**
 * Release a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void mec_string_free(char *s);

/**
 * Load the bundle described by a `manifest.json`.
 *
 * # Safety
 * `manifest_path` must be a NUL-terminated string; `out` must be writable.
 */
enum MecStatus mec_bundle_load(const char *manifest_path, struct MecBundle **out);

/**
 * # Safety
 * `bundle` must come from [`mec_bundle_load`] and not have been freed.
 */
void mec_bundle_free(struct MecBundle *bundle);

/**
 * # Safety
 * `bundle` must be a live handle; `out` must be writable.
 */
enum MecStatus mec_bundle_num_proposals(const struct MecBundle *bundle, size_t *out);

/**
 * Video id of the bundle; free with [`mec_string_free`].
 *
 * # Safety
 * `bundle` must be a live handle; `out` must be writable.
 */
enum MecStatus mec_bundle_video_id(const struct MecBundle *bundle, char **out);

/**
 * Cluster the proposals of a bundle, keeping the coarsest of up to `levels`
 * levels.
 *
 * # Safety
 * `bundle` must be a live handle; `out` must be writable.
 */
enum MecStatus mec_cluster(const struct MecBundle *bundle,
                           size_t levels,
                           double tracklet_scale,
                           struct MecClusters **out);

/**
 * Number of clusters; 0 for NULL.
 *
 * # Safety
 * `c` must be NULL or a live handle.
 */
size_t mec_clusters_count(const struct MecClusters *c);

/**
 * Hierarchy level the clusters come from; 0 for NULL.
 *
 * # Safety
 * `c` must be NULL or a live handle.
 */
size_t mec_clusters_level(const struct MecClusters *c);

/**
 * Write the cluster label of each proposal into `labels[0..len]`. `len`
 * must equal the bundle's proposal count.
 *
 * # Safety
 * `c` must be a live handle and `labels` valid for `len` writes.
 */
enum MecStatus mec_clusters_labels(const struct MecClusters *c, size_t *labels, size_t len);

/**
 * # Safety
 * `c` must come from [`mec_cluster`] and not have been freed.
 */
void mec_clusters_free(struct MecClusters *c);

/**
 * Evaluate a bundle or corpus directory with default settings and return
 * the JSON report; free with [`mec_string_free`].
 *
 * # Safety
 * `bundle_dir` must be a NUL-terminated string; `out_json` must be writable.
 */
enum MecStatus mec_eval_json(const char *bundle_dir, char **out_json);

/**
 * Minimum-cost assignment of a row-major `rows × cols` cost matrix.
 * `out_cols[i]` receives the column matched to row `i`, or `SIZE_MAX` when
 * the row is unmatched (more rows than columns).
 *
 * # Safety
 * `cost` must be valid for `rows * cols` reads, `out_cols` for `rows`
 * writes; `out_total` may be NULL.
 */
enum MecStatus mec_hungarian(const double *cost,
                             size_t rows,
                             size_t cols,
                             size_t *out_cols,
                             double *out_total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEC_H */
