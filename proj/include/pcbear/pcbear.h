/* pcbear C interface.
 *
 * Every call returns a pcbear_status. On failure pcbear_last_error() holds a
 * message for the calling thread until its next call. Strings handed out
 * through char** are heap-allocated JSON documents; release them with
 * pcbear_string_free. Config arguments are JSON text and may be NULL.
 */
#ifndef PCBEAR_H
#define PCBEAR_H

#include <stddef.h>

#if defined(_WIN32)
#if defined(PCBEAR_BUILDING_LIBRARY)
#define PCBEAR_API __declspec(dllexport)
#else
#define PCBEAR_API __declspec(dllimport)
#endif
#else
#define PCBEAR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values match pcbear::ErrorCode. */
typedef enum pcbear_status {
  PCBEAR_OK = 0,
  PCBEAR_MISSING_FILE = 1,
  PCBEAR_SHAPE_MISMATCH = 2,
  PCBEAR_CORRUPT_TENSOR = 3,
  PCBEAR_UNKNOWN_LABEL = 4,
  PCBEAR_IO_FAILURE = 5,
  PCBEAR_BAD_CONFIG = 6,
  PCBEAR_BAD_MANIFEST = 7,
  PCBEAR_DEGENERATE_POSE = 8,
  PCBEAR_WINDOW_TOO_LONG = 9,
  PCBEAR_TOO_FEW_WINDOWS = 10,
  PCBEAR_LENGTH_MISMATCH = 11,
  PCBEAR_NO_SUCH_PARTITION = 12,
  PCBEAR_MISSING_CLASS = 13,
  PCBEAR_NON_FINITE = 14,
  PCBEAR_EMPTY_SPLIT = 15,
  PCBEAR_BAD_CLASS = 16,
  PCBEAR_BAD_CONCEPT_ID = 17,
  PCBEAR_EMPTY_CLASS = 18,
  PCBEAR_UNKNOWN_VIDEO = 19,
  PCBEAR_INVALID_ARGUMENT = 20,
  PCBEAR_INTERNAL = 21
} pcbear_status;

typedef struct pcbear_session pcbear_session;

PCBEAR_API const char* pcbear_version(void);
PCBEAR_API const char* pcbear_status_string(pcbear_status status);
PCBEAR_API const char* pcbear_last_error(void);
/* Pipeline stage that raised the last error, "" when none. */
PCBEAR_API const char* pcbear_last_error_stage(void);
PCBEAR_API void pcbear_string_free(char* s);

/* Stages. config is a synthetic-dataset config for generate and a pipeline
 * config ({seed, windows, cluster, train}) for the rest. summary may be NULL. */
PCBEAR_API pcbear_status pcbear_generate(const char* out_dir, const char* config, char** summary);
PCBEAR_API pcbear_status pcbear_windows(const char* bundle_dir, const char* out_path,
                                        const char* config, char** summary);
PCBEAR_API pcbear_status pcbear_cluster(const char* windows_path, const char* out_path,
                                        const char* config, char** summary);
PCBEAR_API pcbear_status pcbear_annotate(const char* bundle_dir, const char* windows_path,
                                         const char* hierarchy_path, const char* out_path,
                                         const char* config, char** summary);
PCBEAR_API pcbear_status pcbear_train_concepts(const char* bundle_dir, const char* concepts_path,
                                               const char* model_dir, const char* config,
                                               char** summary);
/* Uses the config stored with the model when config is NULL. */
PCBEAR_API pcbear_status pcbear_train_classifier(const char* bundle_dir, const char* model_dir,
                                                 const char* config, char** summary);
PCBEAR_API pcbear_status pcbear_run_pipeline(const char* bundle_dir, const char* out_dir,
                                             const char* config, char** report);

PCBEAR_API pcbear_status pcbear_session_open(const char* model_dir, const char* bundle_dir,
                                             pcbear_session** out);
PCBEAR_API void pcbear_session_close(pcbear_session* session);
PCBEAR_API pcbear_status pcbear_session_videos(const pcbear_session* session, char** out);
PCBEAR_API pcbear_status pcbear_session_video(const pcbear_session* session, const char* video_id,
                                              char** out);
/* split: "train" or "test". */
PCBEAR_API pcbear_status pcbear_session_evaluate(const pcbear_session* session, const char* split,
                                                 char** out);
/* target_class: "auto", a class index or a class name. */
PCBEAR_API pcbear_status pcbear_session_explain(const pcbear_session* session, const char* video_id,
                                                const char* target_class, size_t top_k, char** out);
PCBEAR_API pcbear_status pcbear_session_intervene(const pcbear_session* session,
                                                  const char* video_id, const int* suppress,
                                                  size_t count, char** out);
PCBEAR_API pcbear_status pcbear_session_concepts(const pcbear_session* session, char** out);
PCBEAR_API pcbear_status pcbear_session_concept(const pcbear_session* session, int concept_id,
                                                char** out);
/* level: "summary", "class" (needs target_class) or "task". */
PCBEAR_API pcbear_status pcbear_session_report(const pcbear_session* session, const char* level,
                                               const char* target_class, const char* split,
                                               char** out);
PCBEAR_API pcbear_status pcbear_session_weights(const pcbear_session* session, const int* classes,
                                                size_t count, size_t top_n, char** out);
/* Blocks serving the HTTP API. */
PCBEAR_API pcbear_status pcbear_session_serve(const pcbear_session* session, const char* host,
                                              int port);

/* 100 * top1_percent / concepts. */
PCBEAR_API pcbear_status pcbear_cue(double top1_percent, size_t concepts, double* out);
PCBEAR_API pcbear_status pcbear_nmi(const int* a, const int* b, size_t n, double* out);

#ifdef __cplusplus
}
#endif

#endif
