/* latentkit C API.
 *
 * Opaque handles, status codes, and strings owned by the library. A string
 * returned through a session stays valid until the next call on that
 * session; a string returned without one stays valid until the next call on
 * the same thread.
 */
#ifndef LATENTKIT_H
#define LATENTKIT_H

#include <stddef.h>

#if defined(_WIN32)
#define LK_API __declspec(dllexport)
#else
#define LK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lk_status {
  LK_OK = 0,
  LK_ERR_INVALID_ARGUMENT = 1,
  LK_ERR_CONFIG = 2,
  LK_ERR_IO = 3,
  LK_ERR_NUMERIC = 4,
  LK_ERR_UNSUPPORTED = 5,
  LK_ERR_INTERNAL = 6
} lk_status;

typedef struct lk_session lk_session;
typedef struct lk_model lk_model;

/* Receives warnings and progress messages; NULL restores stderr. */
typedef void (*lk_message_fn)(const char* message, void* user);

LK_API const char* lk_version(void);
LK_API const char* lk_status_name(lk_status status);
/* Message of the last failed call without a session on this thread. */
LK_API const char* lk_last_error(void);
LK_API void lk_set_message_handler(lk_message_fn fn, void* user);

/* Sessions: a configuration plus the results of the last run. */
LK_API lk_status lk_session_create(lk_session** out);
LK_API void lk_session_destroy(lk_session* session);
LK_API const char* lk_session_last_error(const lk_session* session);
LK_API lk_status lk_session_set(lk_session* session, const char* key, const char* value);
/* Replaces the configuration with the file's contents. */
LK_API lk_status lk_session_load_config(lk_session* session, const char* path);
/* Replaces the configuration with a shipped preset. */
LK_API lk_status lk_session_load_recipe(lk_session* session, const char* name);
/* command: synth, train, eval, sample, diagnose or recipe. */
LK_API lk_status lk_session_run(lk_session* session, const char* command);
LK_API lk_status lk_session_config_text(lk_session* session, const char** out);
LK_API const char* lk_session_output_dir(const lk_session* session);
LK_API size_t lk_session_summary_count(const lk_session* session);
LK_API lk_status lk_session_summary_get(const lk_session* session, size_t index, const char** key, double* value);

/* Shipped presets and configuration keys. */
LK_API size_t lk_recipe_count(void);
LK_API const char* lk_recipe_name(size_t index);
LK_API lk_status lk_recipe_text(const char* name, const char** out);
LK_API size_t lk_config_key_count(void);
LK_API lk_status lk_config_key(size_t index, const char** name, const char** default_value, const char** help);

/* Trained models loaded from checkpoints. */
LK_API lk_status lk_model_load(const char* checkpoint_path, lk_model** out);
LK_API void lk_model_free(lk_model* model);
LK_API const char* lk_model_family(const lk_model* model);
LK_API size_t lk_model_vocab_size(const lk_model* model);
/* Exact log p(x) for enumerable families. */
LK_API lk_status lk_model_log_marginal(lk_model* model, const size_t* tokens, size_t length, double* out);

#ifdef __cplusplus
}
#endif

#endif
