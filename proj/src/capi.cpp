#include "latentkit/latentkit.h"

#include <memory>
#include <new>
#include <string>
#include <vector>

#include "latentkit/error.hpp"
#include "latentkit/harness.hpp"

using namespace latentkit;

struct lk_session {
  Config config;
  std::string last_error;
  std::string text;
  RunResult result;
  std::vector<std::pair<std::string, double>> summary;
};

struct lk_model {
  TrainedRun run;
  std::string family;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_text;

lk_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::shape_mismatch:
    case ErrorCode::out_of_range: return LK_ERR_INVALID_ARGUMENT;
    case ErrorCode::unsupported_model: return LK_ERR_UNSUPPORTED;
    case ErrorCode::numeric: return LK_ERR_NUMERIC;
    case ErrorCode::io: return LK_ERR_IO;
    case ErrorCode::config: return LK_ERR_CONFIG;
  }
  return LK_ERR_INTERNAL;
}

template <typename F>
lk_status guarded(std::string& error, F&& body) {
  try {
    body();
    error.clear();
    return LK_OK;
  } catch (const Error& e) {
    error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    error = "out of memory";
  } catch (const std::exception& e) {
    error = e.what();
  } catch (...) {
    error = "unknown failure";
  }
  return LK_ERR_INTERNAL;
}

lk_status null_argument(std::string& error, const char* what) {
  error = std::string(what) + " is null";
  return LK_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* lk_version(void) { return "0.1.0"; }

const char* lk_status_name(lk_status status) {
  switch (status) {
    case LK_OK: return "ok";
    case LK_ERR_INVALID_ARGUMENT: return "invalid argument";
    case LK_ERR_CONFIG: return "config error";
    case LK_ERR_IO: return "io error";
    case LK_ERR_NUMERIC: return "numeric error";
    case LK_ERR_UNSUPPORTED: return "unsupported model";
    case LK_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* lk_last_error(void) { return g_last_error.c_str(); }

void lk_set_message_handler(lk_message_fn fn, void* user) {
  if (!fn) {
    set_warning_sink({});
    set_info_sink({});
    return;
  }
  auto sink = [fn, user](const std::string& m) { fn(m.c_str(), user); };
  set_warning_sink(sink);
  set_info_sink(sink);
}

lk_status lk_session_create(lk_session** out) {
  if (!out) return null_argument(g_last_error, "out");
  return guarded(g_last_error, [&] { *out = new lk_session(); });
}

void lk_session_destroy(lk_session* session) { delete session; }

const char* lk_session_last_error(const lk_session* session) { return session ? session->last_error.c_str() : "session is null"; }

lk_status lk_session_set(lk_session* session, const char* key, const char* value) {
  if (!session) return null_argument(g_last_error, "session");
  if (!key || !value) return null_argument(session->last_error, "key or value");
  return guarded(session->last_error, [&] { session->config.set(key, value); });
}

lk_status lk_session_load_config(lk_session* session, const char* path) {
  if (!session) return null_argument(g_last_error, "session");
  if (!path) return null_argument(session->last_error, "path");
  return guarded(session->last_error, [&] { session->config = Config::load(path); });
}

lk_status lk_session_load_recipe(lk_session* session, const char* name) {
  if (!session) return null_argument(g_last_error, "session");
  if (!name) return null_argument(session->last_error, "name");
  return guarded(session->last_error, [&] { session->config = Config::parse_text(recipe_text(name), std::string("recipe ") + name); });
}

lk_status lk_session_run(lk_session* session, const char* command) {
  if (!session) return null_argument(g_last_error, "session");
  if (!command) return null_argument(session->last_error, "command");
  return guarded(session->last_error, [&] {
    session->result = {};
    session->summary.clear();
    session->result = run_command(command, session->config);
    session->summary.assign(session->result.summary.begin(), session->result.summary.end());
  });
}

lk_status lk_session_config_text(lk_session* session, const char** out) {
  if (!session) return null_argument(g_last_error, "session");
  if (!out) return null_argument(session->last_error, "out");
  return guarded(session->last_error, [&] {
    session->text = session->config.to_string();
    *out = session->text.c_str();
  });
}

const char* lk_session_output_dir(const lk_session* session) { return session ? session->result.output_dir.c_str() : ""; }

size_t lk_session_summary_count(const lk_session* session) { return session ? session->summary.size() : 0; }

lk_status lk_session_summary_get(const lk_session* session, size_t index, const char** key, double* value) {
  if (!session) return null_argument(g_last_error, "session");
  if (!key || !value) return null_argument(g_last_error, "key or value");
  if (index >= session->summary.size()) {
    g_last_error = "summary index out of range";
    return LK_ERR_INVALID_ARGUMENT;
  }
  *key = session->summary[index].first.c_str();
  *value = session->summary[index].second;
  return LK_OK;
}

size_t lk_recipe_count(void) { return recipe_names().size(); }

const char* lk_recipe_name(size_t index) {
  static const std::vector<std::string> names = recipe_names();
  return index < names.size() ? names[index].c_str() : nullptr;
}

lk_status lk_recipe_text(const char* name, const char** out) {
  if (!name || !out) return null_argument(g_last_error, "name or out");
  return guarded(g_last_error, [&] {
    g_text = recipe_text(name);
    *out = g_text.c_str();
  });
}

size_t lk_config_key_count(void) { return config_keys().size(); }

lk_status lk_config_key(size_t index, const char** name, const char** default_value, const char** help) {
  if (!name || !default_value || !help) return null_argument(g_last_error, "output pointer");
  if (index >= config_keys().size()) {
    g_last_error = "config key index out of range";
    return LK_ERR_INVALID_ARGUMENT;
  }
  const ConfigKey& k = config_keys()[index];
  *name = k.name.c_str();
  *default_value = k.default_value.c_str();
  *help = k.help.c_str();
  return LK_OK;
}

lk_status lk_model_load(const char* checkpoint_path, lk_model** out) {
  if (!checkpoint_path || !out) return null_argument(g_last_error, "path or out");
  return guarded(g_last_error, [&] {
    auto m = std::make_unique<lk_model>();
    m->run = load_trained(checkpoint_path);
    m->family = m->run.model->family();
    *out = m.release();
  });
}

void lk_model_free(lk_model* model) { delete model; }

const char* lk_model_family(const lk_model* model) { return model ? model->family.c_str() : ""; }

size_t lk_model_vocab_size(const lk_model* model) { return model ? model->run.model->vocab_size() : 0; }

lk_status lk_model_log_marginal(lk_model* model, const size_t* tokens, size_t length, double* out) {
  if (!model || !out || (!tokens && length > 0)) return null_argument(g_last_error, "model, tokens or out");
  return guarded(g_last_error, [&] {
    Sentence x(tokens, tokens + length);
    NoGradGuard no_grad;
    *out = log_marginal(*model->run.model, x).item();
  });
}

}  // extern "C"
