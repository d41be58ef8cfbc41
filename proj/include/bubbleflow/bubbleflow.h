#ifndef BUBBLEFLOW_H
#define BUBBLEFLOW_H

/* C interface to the bubble-dynamics workflow. All functions are thread-compatible: distinct
 * handles may be used from different threads. Error details for the last failing call on the
 * calling thread are available from bf_last_error(). */

#include <stddef.h>
#include <stdint.h>

#if defined(BUBBLEFLOW_BUILDING)
#define BF_API __attribute__((visibility("default")))
#else
#define BF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bf_status {
  BF_OK = 0,
  BF_INVALID_ARGUMENT = 1,
  BF_INVALID_SCENE = 2,
  BF_OUT_OF_BOUNDS = 3,
  BF_FORMAT = 4,
  BF_SPEC_MISMATCH = 5,
  BF_EMPTY_SAMPLE = 6,
  BF_NOT_FOUND = 7,
  BF_IO = 8,
  BF_INTERNAL = 9
} bf_status;

typedef struct bf_config bf_config;
typedef struct bf_catalog bf_catalog;

typedef struct bf_row {
  int32_t time_index;
  int32_t bubble_id;
  double volume;
  double x_center;
  double y_center;
  double z_center;
  double aspect_ratio;
  double mean_similarity;
  int is_freeboard;
  const char* image_path; /* owned by the catalog handle; valid until the next query or close */
} bf_row;

BF_API const char* bf_version(void);
BF_API const char* bf_status_str(bf_status status);
/* Message of the last failure on this thread; empty after a success. */
BF_API const char* bf_last_error(void);
/* JSON summary of the last successful stage call on this thread. */
BF_API const char* bf_last_report(void);

BF_API bf_status bf_config_create(bf_config** out);
BF_API void bf_config_destroy(bf_config* cfg);
/* Keys: out scene scene_file grid gamma cluster max_iters threshold min_voxels every dt seed steps
 * particles ranks template_box ("i,j,k:i,j,k") template_step keep_density low_confidence
 * volume_jump_ratio image_scale. */
BF_API bf_status bf_config_set(bf_config* cfg, const char* key, const char* value);

BF_API bf_status bf_generate(const bf_config* cfg);
BF_API bf_status bf_summarize(const bf_config* cfg);
BF_API bf_status bf_extract(const bf_config* cfg);
BF_API bf_status bf_track(const bf_config* cfg);
BF_API bf_status bf_build_catalog(const bf_config* cfg);

/* Serves the catalog under the config's out directory. port 0 picks a free port; ready (may be
 * NULL) receives the bound port before requests are accepted. duration_s > 0 stops the server
 * afterwards, otherwise the call blocks until the process ends. */
typedef void (*bf_ready_fn)(int port, void* user);
BF_API bf_status bf_serve(const bf_config* cfg, const char* host, int port, double duration_s, bf_ready_fn ready,
                          void* user);

BF_API bf_status bf_catalog_open(const char* run_dir, bf_catalog** out);
BF_API void bf_catalog_close(bf_catalog* cat);
BF_API size_t bf_catalog_size(const bf_catalog* cat);
/* Query string as in the HTTP API, e.g. "t0=0&t1=10&volume_min=5". Returns the match count. */
BF_API bf_status bf_catalog_query(bf_catalog* cat, const char* query, size_t* n_out);
BF_API bf_status bf_catalog_row(const bf_catalog* cat, size_t i, bf_row* out);

#ifdef __cplusplus
}
#endif

#endif
