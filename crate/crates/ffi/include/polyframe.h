#ifndef POLYFRAME_H
#define POLYFRAME_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PfStatus {
  PF_STATUS_OK = 0,
  PF_STATUS_NULL_POINTER = 1,
  PF_STATUS_INVALID_UTF8 = 2,
  PF_STATUS_IO = 3,
  PF_STATUS_INVALID_DATA = 4,
  PF_STATUS_CONFIG = 5,
  PF_STATUS_MISSING_EMBEDDING = 6,
  PF_STATUS_INVALID_ARGUMENT = 7,
  PF_STATUS_INTERNAL = 8,
} PfStatus;

/**
 * A loaded run: configuration, dataset and scoring resources.
 */
typedef struct PfPipeline PfPipeline;

/**
 * Embedding store loaded from a PFEMB file.
 */
typedef struct PfStore PfStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *pf_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void pf_string_free(char *s);

/**
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum PfStatus pf_store_load(const char *path, struct PfStore **out);

/**
 * Vector dimension; 0 for a null handle.
 *
 * # Safety
 * `store` must be null or a live handle.
 */
size_t pf_store_dimension(const struct PfStore *store);

/**
 * Number of keys; 0 for a null handle.
 *
 * # Safety
 * `store` must be null or a live handle.
 */
size_t pf_store_len(const struct PfStore *store);

/**
 * Borrows the vector for `key`: `pf_store_dimension` floats owned by the
 * store and valid until it is freed.
 *
 * # Safety
 * `store` must be a live handle, `key` nul-terminated, `out` writable.
 */
enum PfStatus pf_store_get(const struct PfStore *store, const char *key, const float **out);

/**
 * # Safety
 * `store` must be null or a handle from `pf_store_load`, freed once.
 */
void pf_store_free(struct PfStore *store);

/**
 * Store key under which a sentence's text embedding is filed.
 *
 * # Safety
 * `text` must be nul-terminated; `out` writable. Free the result with
 * `pf_string_free`.
 */
enum PfStatus pf_text_key(const char *text, char **out);

/**
 * Weighted Borda fusion. `scores` is row-major `n_streams x n_candidates`;
 * rows map to the vision, m3-text and vl-text streams in that order, so
 * `n_streams` is at most 3. Writes the best-first candidate order and the
 * fused score per candidate, each `n_candidates` long.
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths.
 */
enum PfStatus pf_borda_fuse(const double *scores,
                            const double *weights,
                            size_t n_streams,
                            size_t n_candidates,
                            size_t *out_order,
                            double *out_scores);

/**
 * NDCG@5 of `prediction` against `gold` (both permutations of the same five
 * candidate ids, gold best first) under the default relevance profile.
 *
 * # Safety
 * `prediction` and `gold` must hold `n` values; `out` must be writable.
 */
enum PfStatus pf_ndcg5(const uint32_t *prediction, const uint32_t *gold, size_t n, double *out);

/**
 * Loads a run configuration, applies `KEY=VALUE` overrides and loads the
 * dataset and every resource it names.
 *
 * # Safety
 * `config_path` must be nul-terminated; `overrides` must hold
 * `n_overrides` nul-terminated strings (or be null when zero); `out` must be
 * writable.
 */
enum PfStatus pf_pipeline_open(const char *config_path,
                               const char *const *overrides,
                               size_t n_overrides,
                               struct PfPipeline **out);

/**
 * Number of dataset instances; 0 for a null handle.
 *
 * # Safety
 * `pipeline` must be null or a live handle.
 */
size_t pf_pipeline_len(const struct PfPipeline *pipeline);

/**
 * 16-hex-digit hash of the effective pipeline settings.
 *
 * # Safety
 * `pipeline` must be a live handle; `out` writable.
 */
enum PfStatus pf_pipeline_config_hash(const struct PfPipeline *pipeline, char **out);

/**
 * Ranks every instance and writes the predictions TSV (no timestamp line)
 * to `out_tsv`. Instances that fail in lenient mode are counted in
 * `out_failed`; strict mode fails the call instead.
 *
 * # Safety
 * `pipeline` must be a live handle; `out_tsv` writable; `out_failed` null
 * or writable.
 */
enum PfStatus pf_pipeline_rank(const struct PfPipeline *pipeline,
                               char **out_tsv,
                               size_t *out_failed);

/**
 * # Safety
 * `pipeline` must be null or a handle from `pf_pipeline_open`, freed once.
 */
void pf_pipeline_free(struct PfPipeline *pipeline);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLYFRAME_H */
