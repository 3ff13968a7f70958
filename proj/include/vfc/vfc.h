/* C interface to the caption pipeline, evaluation harness and human-eval service. */
#ifndef VFC_H
#define VFC_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define VFC_API __declspec(dllexport)
#else
#define VFC_API __attribute__((visibility("default")))
#endif

typedef enum vfc_status {
  VFC_OK = 0,
  VFC_E_PRECONDITION,
  VFC_E_RETRIABLE_EXHAUSTED,
  VFC_E_ENDPOINT,
  VFC_E_MALFORMED_RESPONSE,
  VFC_E_IMAGE_LOAD,
  VFC_E_DIMENSION,
  VFC_E_GENERATION_REFUSED,
  VFC_E_CACHE_CORRUPT,
  VFC_E_UNKNOWN_TEMPLATE,
  VFC_E_SLOT_ARITY,
  VFC_E_EMPTY_CHECKLIST,
  VFC_E_MISSING_MARKER,
  VFC_E_NO_QUESTIONS,
  VFC_E_INCOMPLETE_JUDGMENT,
  VFC_E_PROPOSAL_FAILED,
  VFC_E_VQA_FAILED,
  VFC_E_PIPELINE_FAILED,
  VFC_E_DEGENERATE_VECTOR,
  VFC_E_ALIGNMENT,
  VFC_E_CONFIG,
  VFC_E_MISSING_FILES,
  VFC_E_DUPLICATE_IDS,
  VFC_E_SCHEMA,
  VFC_E_BATCH_FAILED,
  VFC_E_EMPTY_REPORT,
  VFC_E_NO_TASKS,
  VFC_E_DUPLICATE_VOTE,
  VFC_E_UNKNOWN_TASK,
  VFC_E_NOT_SERVED,
  VFC_E_TASK_CLOSED,
  VFC_E_IO,
  VFC_E_INVALID_ARGUMENT = 100,
  VFC_E_INTERNAL = 101
} vfc_status;

typedef struct vfc_context vfc_context;
typedef struct vfc_humaneval vfc_humaneval;

typedef struct vfc_batch_result {
  int total;
  int processed;
  int skipped;
  int failed;
} vfc_batch_result;

typedef struct vfc_winrate {
  int wins;
  int losses;
  int ties;
  int n;
  double rate;
} vfc_winrate;

/* Message for the last failing call on this thread; never NULL. */
VFC_API const char* vfc_last_error_message(void);
/* Stable name such as "DuplicateVote". */
VFC_API const char* vfc_status_string(vfc_status status);
VFC_API const char* vfc_version(void);
/* Frees strings returned through char** out-parameters. */
VFC_API void vfc_string_free(char* s);
/* "trace", "debug", "info", "warn", "error", "off". Logs go to stderr. */
VFC_API vfc_status vfc_set_log_level(const char* level);

/* config_path: RunConfig JSON, NULL for defaults. mock_fixtures: NULL for live endpoints. offline != 0 replays the cache only.
   bearer_token may be NULL. */
VFC_API vfc_status vfc_context_create(const char* config_path, const char* mock_fixtures, int offline,
                                      const char* bearer_token, vfc_context** out);
VFC_API void vfc_context_destroy(vfc_context* ctx);
/* "full" or "no_factcheck". */
VFC_API vfc_status vfc_context_set_variant(vfc_context* ctx, const char* variant);
/* NULL clears the style instruction. */
VFC_API vfc_status vfc_context_set_style(vfc_context* ctx, const char* style);
VFC_API vfc_status vfc_context_set_concurrency(vfc_context* ctx, int concurrency);
/* Mock backend call count and peak concurrent calls; VFC_E_PRECONDITION without the mock. */
VFC_API vfc_status vfc_context_mock_stats(vfc_context* ctx, size_t* calls, int* max_in_flight);

/* task: caption2d, caption3d, clip, clip_image, winrate, judge. manifest may be NULL for winrate.
   captions/baselines: caption files (or score files for winrate). output may be NULL for the default path.
   output_path_out (optional) receives the written path; free with vfc_string_free.
   Partial failures return VFC_OK with result->failed > 0; VFC_E_BATCH_FAILED when all items failed. */
VFC_API vfc_status vfc_run_batch(vfc_context* ctx, const char* task, const char* manifest,
                                 const char* const* captions, size_t n_captions, const char* const* baselines,
                                 size_t n_baselines, const char* output, vfc_batch_result* result,
                                 char** output_path_out);

/* Writes report.json and report.txt into out_dir; text_out (optional) receives the table text. */
VFC_API vfc_status vfc_write_report(const char* const* scores, size_t n_scores, const char* const* judgments,
                                    size_t n_judgments, const char* const* votes, size_t n_votes,
                                    const char* reference_method, const char* out_dir, char** text_out);

VFC_API vfc_status vfc_cosine(const double* a, const double* b, size_t n, double* out);
VFC_API vfc_status vfc_winning_rate(const double* ours, const double* baseline, size_t n, vfc_winrate* out);
VFC_API vfc_status vfc_render_prompt(const char* template_id, const char* const* slots, size_t n_slots, char** out);

/* pairs: JSONL pair tasks. log: append-only vote log (created if absent). */
VFC_API vfc_status vfc_humaneval_open(const char* pairs, const char* log, uint64_t seed, vfc_humaneval** out);
/* Serves in the background; port 0 picks a free port, written to bound_port. Directories may be NULL. */
VFC_API vfc_status vfc_humaneval_serve(vfc_humaneval* he, const char* host, int port, const char* static_dir,
                                       const char* images_dir, int* bound_port);
VFC_API vfc_status vfc_humaneval_stop(vfc_humaneval* he);
/* JSON array of per-pair tallies; free with vfc_string_free. */
VFC_API vfc_status vfc_humaneval_results(vfc_humaneval* he, char** json_out);
VFC_API void vfc_humaneval_close(vfc_humaneval* he);

#ifdef __cplusplus
}
#endif

#endif /* VFC_H */
