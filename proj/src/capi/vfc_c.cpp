#include <cstring>
#include <memory>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "vfc/harness.hpp"
#include "vfc/humaneval.hpp"
#include "vfc/metrics.hpp"
#include "vfc/prompts.hpp"
#include "vfc/vfc.h"

struct vfc_context {
  std::unique_ptr<vfc::Context> ctx;
};

struct vfc_humaneval {
  std::unique_ptr<vfc::HumanEvalStore> store;
  std::unique_ptr<vfc::HumanEvalServer> server;
};

namespace {

thread_local std::string g_last_error;

static_assert(static_cast<int>(vfc::ErrorCode::precondition) + 1 == VFC_E_PRECONDITION);
static_assert(static_cast<int>(vfc::ErrorCode::config_error) + 1 == VFC_E_CONFIG);
static_assert(static_cast<int>(vfc::ErrorCode::io_error) + 1 == VFC_E_IO);

vfc_status status_of(vfc::ErrorCode code) { return static_cast<vfc_status>(static_cast<int>(code) + 1); }

template <typename F>
vfc_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return VFC_OK;
  } catch (const vfc::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return VFC_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return VFC_E_INTERNAL;
  }
}

vfc_status invalid(const char* what) {
  g_last_error = what;
  return VFC_E_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<std::filesystem::path> paths(const char* const* list, std::size_t n) {
  std::vector<std::filesystem::path> out;
  for (std::size_t i = 0; i < n; ++i)
    if (list && list[i]) out.emplace_back(list[i]);
  return out;
}

}  // namespace

extern "C" {

const char* vfc_last_error_message(void) { return g_last_error.c_str(); }

const char* vfc_status_string(vfc_status status) {
  if (status == VFC_OK) return "Ok";
  if (status == VFC_E_INVALID_ARGUMENT) return "InvalidArgument";
  if (status == VFC_E_INTERNAL) return "Internal";
  int code = static_cast<int>(status) - 1;
  if (code < 0 || code > static_cast<int>(vfc::ErrorCode::io_error)) return "Unknown";
  return vfc::to_string(static_cast<vfc::ErrorCode>(code)).data();
}

const char* vfc_version(void) { return "0.1.0"; }

void vfc_string_free(char* s) { std::free(s); }

vfc_status vfc_set_log_level(const char* level) {
  if (!level) return invalid("level is NULL");
  return guarded([&] {
    auto lvl = spdlog::level::from_str(level);
    if (lvl == spdlog::level::off && std::strcmp(level, "off") != 0)
      vfc::fail(vfc::ErrorCode::config_error, std::string("unknown log level '") + level + "'");
    if (!spdlog::get("vfc")) {
      auto logger = spdlog::stderr_color_mt("vfc");
      spdlog::set_default_logger(logger);
    }
    spdlog::set_level(lvl);
  });
}

vfc_status vfc_context_create(const char* config_path, const char* mock_fixtures, int offline,
                              const char* bearer_token, vfc_context** out) {
  if (!out) return invalid("out is required");
  return guarded([&] {
    vfc::ContextOptions o;
    if (mock_fixtures) o.mock_fixtures = mock_fixtures;
    o.offline = offline != 0;
    if (bearer_token) o.bearer_token = bearer_token;
    auto c = std::make_unique<vfc_context>();
    c->ctx = std::make_unique<vfc::Context>(config_path ? vfc::RunConfig::load(config_path) : vfc::RunConfig{}, o);
    *out = c.release();
  });
}

void vfc_context_destroy(vfc_context* ctx) { delete ctx; }

vfc_status vfc_context_set_variant(vfc_context* ctx, const char* variant) {
  if (!ctx || !variant) return invalid("ctx and variant are required");
  return guarded([&] { ctx->ctx->mutable_config().variant = vfc::variant_from_string(variant); });
}

vfc_status vfc_context_set_style(vfc_context* ctx, const char* style) {
  if (!ctx) return invalid("ctx is NULL");
  return guarded([&] {
    auto& s = ctx->ctx->mutable_config().style;
    if (style && *style)
      s.text = style;
    else
      s.text.reset();
  });
}

vfc_status vfc_context_set_concurrency(vfc_context* ctx, int concurrency) {
  if (!ctx) return invalid("ctx is NULL");
  if (concurrency < 1) return invalid("concurrency must be positive");
  return guarded([&] { ctx->ctx->mutable_config().concurrency = concurrency; });
}

vfc_status vfc_context_mock_stats(vfc_context* ctx, size_t* calls, int* max_in_flight) {
  if (!ctx) return invalid("ctx is NULL");
  return guarded([&] {
    auto* mock = ctx->ctx->mock();
    vfc::require(mock != nullptr, "mock backend is not active");
    if (calls) *calls = mock->call_count();
    if (max_in_flight) *max_in_flight = mock->max_in_flight();
  });
}

vfc_status vfc_run_batch(vfc_context* ctx, const char* task, const char* manifest, const char* const* captions,
                         size_t n_captions, const char* const* baselines, size_t n_baselines, const char* output,
                         vfc_batch_result* result, char** output_path_out) {
  if (!ctx || !task) return invalid("ctx and task are required");
  return guarded([&] {
    auto t = vfc::batch_task_from_string(task);
    std::optional<vfc::Manifest> m;
    if (manifest) m = vfc::load_manifest(manifest, ctx->ctx->config().default_views);
    vfc::BatchOptions o;
    if (output) o.output = output;
    o.eval.captions = paths(captions, n_captions);
    o.eval.baselines = paths(baselines, n_baselines);
    vfc::BatchResult r;
    try {
      r = vfc::run_batch(*ctx->ctx, m ? &*m : nullptr, t, o);
    } catch (const vfc::Error& e) {
      if (e.code() == vfc::ErrorCode::batch_failed && result) {
        result->total = result->failed = -1;
        result->processed = result->skipped = 0;
      }
      throw;
    }
    if (result) *result = {r.total, r.processed, r.skipped, r.failed};
    if (output_path_out) *output_path_out = dup_string(r.output.string());
  });
}

vfc_status vfc_write_report(const char* const* scores, size_t n_scores, const char* const* judgments,
                            size_t n_judgments, const char* const* votes, size_t n_votes,
                            const char* reference_method, const char* out_dir, char** text_out) {
  if (!out_dir) return invalid("out_dir is required");
  return guarded([&] {
    vfc::ReportInputs in;
    in.scores = paths(scores, n_scores);
    in.judgments = paths(judgments, n_judgments);
    in.votes = paths(votes, n_votes);
    if (reference_method) in.reference_method = reference_method;
    auto rep = vfc::write_report(in, out_dir);
    if (text_out) *text_out = dup_string(rep.text);
  });
}

vfc_status vfc_cosine(const double* a, const double* b, size_t n, double* out) {
  if ((!a || !b) && n > 0) return invalid("vectors are NULL");
  if (!out) return invalid("out is NULL");
  return guarded([&] {
    *out = vfc::cosine(std::vector<double>(a, a + n), std::vector<double>(b, b + n));
  });
}

vfc_status vfc_winning_rate(const double* ours, const double* baseline, size_t n, vfc_winrate* out) {
  if ((!ours || !baseline) && n > 0) return invalid("score arrays are NULL");
  if (!out) return invalid("out is NULL");
  return guarded([&] {
    auto r = vfc::winning_rate(std::vector<double>(ours, ours + n), std::vector<double>(baseline, baseline + n));
    *out = {r.wins, r.losses, r.ties, r.n, r.rate};
  });
}

vfc_status vfc_render_prompt(const char* template_id, const char* const* slots, size_t n_slots, char** out) {
  if (!template_id || !out) return invalid("template_id and out are required");
  return guarded([&] {
    std::vector<std::string> s;
    for (std::size_t i = 0; i < n_slots; ++i) s.emplace_back(slots && slots[i] ? slots[i] : "");
    *out = dup_string(vfc::render_prompt(template_id, s));
  });
}

vfc_status vfc_humaneval_open(const char* pairs, const char* log, uint64_t seed, vfc_humaneval** out) {
  if (!pairs || !log || !out) return invalid("pairs, log and out are required");
  return guarded([&] {
    auto he = std::make_unique<vfc_humaneval>();
    he->store = std::make_unique<vfc::HumanEvalStore>(vfc::load_pairs(pairs), log, seed);
    *out = he.release();
  });
}

vfc_status vfc_humaneval_serve(vfc_humaneval* he, const char* host, int port, const char* static_dir,
                               const char* images_dir, int* bound_port) {
  if (!he) return invalid("handle is NULL");
  if (he->server) return invalid("service already running");
  return guarded([&] {
    vfc::HumanEvalServerOptions o;
    if (host) o.host = host;
    o.port = port;
    if (static_dir) o.static_dir = static_dir;
    if (images_dir) o.images_dir = images_dir;
    auto server = std::make_unique<vfc::HumanEvalServer>(*he->store, o);
    int p = server->start();
    he->server = std::move(server);
    if (bound_port) *bound_port = p;
  });
}

vfc_status vfc_humaneval_stop(vfc_humaneval* he) {
  if (!he) return invalid("handle is NULL");
  return guarded([&] {
    if (he->server) he->server->stop();
    he->server.reset();
  });
}

vfc_status vfc_humaneval_results(vfc_humaneval* he, char** json_out) {
  if (!he || !json_out) return invalid("handle and json_out are required");
  return guarded([&] {
    vfc::ordered_json arr = vfc::ordered_json::array();
    for (const auto& t : he->store->results()) arr.push_back(t.to_json());
    *json_out = dup_string(arr.dump());
  });
}

void vfc_humaneval_close(vfc_humaneval* he) {
  if (!he) return;
  if (he->server) he->server->stop();
  delete he;
}

}  // extern "C"
