#include <set>

#include <spdlog/spdlog.h>

#include "vfc/harness.hpp"
#include "vfc/prompts.hpp"
#include "vfc/util.hpp"

namespace vfc {
namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "captioners", "captioners_3d", "llm", "detector", "vqa", "embedder", "image_gen", "view3d_gen", "judge",
      "variant", "style", "concurrency", "cache_dir", "output_dir", "seed", "clip_score_mode", "box_threshold",
      "text_threshold", "degrade_on_detector_failure", "record_timings", "token_warn_threshold", "max_in_flight",
      "role_limits", "retry", "image_size", "default_views", "reference_method"};
  return keys;
}

ModelEndpoint endpoint_with_seed(const json& j, Role role, std::int64_t seed) {
  auto e = ModelEndpoint::from_json(j, role);
  if (!j.contains("seed")) e.seed = seed;
  if (e.role != role)
    fail(ErrorCode::config_error, "endpoint '" + e.id + "' has role " + std::string(to_string(e.role)) +
                                      ", expected " + std::string(to_string(role)));
  return e;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

json endpoint_digest_fields(const ModelEndpoint& e) {
  return json{{"id", e.id},
              {"role", std::string(to_string(e.role))},
              {"model_id", e.model_id},
              {"temperature", e.temperature},
              {"max_tokens", e.max_tokens},
              {"seed", e.seed ? json(*e.seed) : json()},
              {"supports_seed", e.supports_seed},
              {"weak_instruction_following", e.weak_instruction_following},
              {"prompt", e.prompt_template}};
}

json optional_endpoint(const std::optional<ModelEndpoint>& e) {
  return e ? endpoint_digest_fields(*e) : json();
}

json endpoint_list(const std::vector<ModelEndpoint>& list) {
  json out = json::array();
  for (const auto& e : list) out.push_back(endpoint_digest_fields(e));
  return out;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) fail(ErrorCode::config_error, "run config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known_keys().count(k)) fail(ErrorCode::config_error, "unknown config key '" + k + "'");
  RunConfig c;
  try {
    c.seed = j.value("seed", std::int64_t{0});
    auto one = [&](const char* key, Role role) -> std::optional<ModelEndpoint> {
      if (!j.contains(key) || j[key].is_null()) return std::nullopt;
      return endpoint_with_seed(j[key], role, c.seed);
    };
    auto many = [&](const char* key) {
      std::vector<ModelEndpoint> out;
      if (!j.contains(key)) return out;
      if (!j[key].is_array()) fail(ErrorCode::config_error, std::string(key) + " must be a list");
      for (const auto& e : j[key]) out.push_back(endpoint_with_seed(e, Role::captioner, c.seed));
      return out;
    };
    c.captioners = many("captioners");
    c.captioners_3d = many("captioners_3d");
    c.llm = one("llm", Role::llm);
    c.detector = one("detector", Role::detector);
    c.vqa = one("vqa", Role::vqa);
    c.embedder = one("embedder", Role::embedder);
    c.image_gen = one("image_gen", Role::image_gen);
    c.view3d_gen = one("view3d_gen", Role::view3d_gen);
    c.judge = one("judge", Role::llm);

    c.variant = variant_from_string(j.value("variant", "full"));
    if (j.contains("style") && !j["style"].is_null()) c.style.text = j["style"].get<std::string>();
    c.concurrency = j.value("concurrency", 4);
    c.cache_dir = resolve(base_dir, j.value("cache_dir", std::string{}));
    c.output_dir = resolve(base_dir, j.value("output_dir", std::string("out")));
    c.clip_score_mode = clip_score_mode_from_string(j.value("clip_score_mode", "cosine100"));
    c.box_threshold = j.value("box_threshold", 0.35);
    c.text_threshold = j.value("text_threshold", 0.25);
    c.degrade_on_detector_failure = j.value("degrade_on_detector_failure", false);
    c.record_timings = j.value("record_timings", true);
    c.token_warn_threshold = j.value("token_warn_threshold", std::size_t{77});
    c.max_in_flight = j.value("max_in_flight", 0);
    if (j.contains("role_limits"))
      for (const auto& [role, limit] : j["role_limits"].items()) c.role_limits[role_from_string(role)] = limit.get<int>();
    if (j.contains("retry")) {
      c.retry.base_delay_ms = j["retry"].value("base_delay_ms", c.retry.base_delay_ms);
      c.retry.max_delay_ms = j["retry"].value("max_delay_ms", c.retry.max_delay_ms);
    }
    c.image_size = j.value("image_size", c.image_size);
    if (j.contains("default_views")) {
      c.default_views.clear();
      for (const auto& v : j["default_views"])
        c.default_views.push_back({v.value("azimuth", 0.0), v.value("elevation", 0.0)});
    }
    c.reference_method = j.value("reference_method", std::string{});
  } catch (const json::exception& e) {
    fail(ErrorCode::config_error, std::string("bad config value: ") + e.what());
  }
  if (c.concurrency < 1) fail(ErrorCode::config_error, "concurrency must be positive");
  if (c.box_threshold < 0 || c.box_threshold > 1 || c.text_threshold < 0 || c.text_threshold > 1)
    fail(ErrorCode::config_error, "detector thresholds must lie in [0, 1]");
  if (c.retry.base_delay_ms < 0 || c.retry.max_delay_ms < c.retry.base_delay_ms)
    fail(ErrorCode::config_error, "retry delays must satisfy 0 <= base_delay_ms <= max_delay_ms");
  std::set<std::string> ids;
  for (const auto& e : c.captioners)
    if (!ids.insert(e.id).second) fail(ErrorCode::config_error, "duplicate captioner id '" + e.id + "'");
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::config_error, path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

std::string config_digest(const RunConfig& c, BatchTask task) {
  json d{{"v", 1}, {"task", std::string(to_string(task))}, {"templates", TemplateRegistry::shared().checksum()}};
  switch (task) {
    case BatchTask::caption2d:
      d["variant"] = std::string(to_string(c.variant));
      d["style"] = c.style.empty() ? json() : json(*c.style.text);
      d["captioners"] = endpoint_list(c.captioners);
      d["llm"] = optional_endpoint(c.llm);
      if (c.variant == Variant::full) {
        d["detector"] = optional_endpoint(c.detector);
        d["box_threshold"] = c.box_threshold;
        d["text_threshold"] = c.text_threshold;
        d["degrade_on_detector_failure"] = c.degrade_on_detector_failure;
      }
      break;
    case BatchTask::caption3d:
      d["variant"] = std::string(to_string(c.variant));
      d["captioners"] = endpoint_list(c.captioners_3d.empty() ? c.captioners : c.captioners_3d);
      d["llm"] = optional_endpoint(c.llm);
      if (c.variant == Variant::full) d["vqa"] = optional_endpoint(c.vqa);
      break;
    case BatchTask::clip:
      d["embedder"] = optional_endpoint(c.embedder);
      d["clip_score_mode"] = std::string(to_string(c.clip_score_mode));
      break;
    case BatchTask::clip_image:
      d["embedder"] = optional_endpoint(c.embedder);
      d["image_gen"] = optional_endpoint(c.image_gen);
      d["view3d_gen"] = optional_endpoint(c.view3d_gen);
      d["image_size"] = c.image_size;
      break;
    case BatchTask::judge:
      d["judge"] = optional_endpoint(c.judge ? c.judge : c.llm);
      break;
    case BatchTask::winrate:
      break;
  }
  return sha256_hex(d.dump());
}

Context::Context(RunConfig config, ContextOptions options) : config_(std::move(config)) {
  if (options.offline) {
    if (config_.cache_dir.empty())
      fail(ErrorCode::config_error, "offline replay needs a cache_dir holding a warm cache");
    transport_ = std::make_unique<OfflineTransport>();
  } else if (!options.mock_fixtures.empty()) {
    json fixtures;
    try {
      fixtures = json::parse(read_file(options.mock_fixtures));
    } catch (const json::exception& e) {
      fail(ErrorCode::config_error, options.mock_fixtures.string() + ": " + e.what());
    }
    auto mock = std::make_unique<MockTransport>(std::move(fixtures), options.mock_fixtures.parent_path());
    mock_ = mock.get();
    transport_ = std::move(mock);
  } else {
    transport_ = std::make_unique<HttpTransport>();
  }
  cache_ = std::make_unique<ResponseCache>(config_.cache_dir);

  GatewayOptions g;
  g.retry = config_.retry;
  g.max_in_flight = config_.max_in_flight > 0 ? config_.max_in_flight : config_.concurrency;
  g.role_limits = config_.role_limits;
  g.artifact_dir = config_.output_dir / "artifacts";
  g.bearer_token = options.bearer_token;
  g.image_size = config_.image_size;
  gateway_ = std::make_unique<Gateway>(*transport_, *cache_, g);
}

Context::~Context() = default;

}  // namespace vfc
