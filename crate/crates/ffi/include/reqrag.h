#ifndef REQRAG_H
#define REQRAG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  REQRAG_STATUS_OK = 0,
  REQRAG_STATUS_NULL_ARGUMENT = 1,
  REQRAG_STATUS_INVALID_UTF8 = 2,
  REQRAG_STATUS_INVALID_ARGUMENT = 3,
  REQRAG_STATUS_FAILED = 4,
  REQRAG_STATUS_PANIC = 5,
} ReqragStatus;

/*
 Opaque category taxonomy.
 */
typedef struct ReqragTaxonomy ReqragTaxonomy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next call into this library on the same thread.
 */
const char *reqrag_last_error(void);

/*
 Releases a string returned by this library. NULL is ignored.
 */
void reqrag_string_free(char *s);

/*
 The built-in seven-category taxonomy.
 */
ReqragStatus reqrag_taxonomy_default(ReqragTaxonomy **out);

/*
 Loads a taxonomy from a TOML file.
 */
ReqragStatus reqrag_taxonomy_load(const char *path, ReqragTaxonomy **out);

/*
 Number of categories, or 0 for NULL.
 */
size_t reqrag_taxonomy_len(const ReqragTaxonomy *taxonomy);

/*
 Releases a taxonomy. NULL is ignored.
 */
void reqrag_taxonomy_free(ReqragTaxonomy *taxonomy);

/*
 Offline embedding of `text` into `out[0..dimension]`.
 */
ReqragStatus reqrag_offline_embed(const char *text_in, size_t dimension, double *out);

/*
 Cosine similarity of two vectors of length `len`.
 */
ReqragStatus reqrag_cosine(const double *a, const double *b, size_t len, double *out);

/*
 Index of the highest score; ties go to the lowest index.
 */
ReqragStatus reqrag_assign_category(const double *scores, size_t k, size_t *out);

/*
 Counts `n` category ids into `out[0..k]`.
 */
ReqragStatus reqrag_aggregate_counts(const size_t *categories, size_t n, size_t k, double *out);

/*
 Selects standards whose label has cosine strictly above `threshold` with
 the mission counts. `domain` holds `n` labels of length `k`, row-major.
 Selected row indices are written to `out_indices` in rank order (at most
 `n` of them) and their number to `out_count`. A negative `top_k` means
 no limit.
 */
ReqragStatus reqrag_select(const double *mission,
                           size_t k,
                           const double *domain,
                           size_t n,
                           double threshold,
                           ptrdiff_t top_k,
                           size_t *out_indices,
                           size_t *out_count);

/*
 Renders the answer-generation prompt. Chunk `i` of each list gets the id
 of ordinal `i` in a document named `mission` or `domain`. The prompt is
 returned in `out` and must be released with `reqrag_string_free`.
 */
ReqragStatus reqrag_build_prompt(const ReqragTaxonomy *taxonomy,
                                 const char *mission_name,
                                 const char *category,
                                 const char *const *mission_texts,
                                 size_t n_mission,
                                 const char *const *domain_texts,
                                 size_t n_domain,
                                 char **out);

/*
 Runs every stage. `config_path` may be NULL for defaults; `offline`
 non-zero selects offline providers. The path of the answer record is
 returned in `out_record`.
 */
ReqragStatus reqrag_pipeline_run(const char *config_path,
                                 const char *workspace,
                                 int32_t offline,
                                 const char *const *mission_paths,
                                 size_t n_mission,
                                 const char *const *domain_paths,
                                 size_t n_domain,
                                 const char *query,
                                 const char *category,
                                 const char *mission_name,
                                 char **out_record);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REQRAG_H */
