#include "vfc/types.hpp"

#include <set>

#include "vfc/error.hpp"
#include "vfc/util.hpp"

namespace vfc {

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::captioner: return "captioner";
    case Role::llm: return "llm";
    case Role::detector: return "detector";
    case Role::vqa: return "vqa";
    case Role::embedder: return "embedder";
    case Role::image_gen: return "image_gen";
    case Role::view3d_gen: return "view3d_gen";
  }
  return "unknown";
}

Role role_from_string(std::string_view name) {
  for (Role r : {Role::captioner, Role::llm, Role::detector, Role::vqa, Role::embedder,
                 Role::image_gen, Role::view3d_gen}) {
    if (to_string(r) == name) return r;
  }
  fail(ErrorCode::config_error, "unknown endpoint role '" + std::string(name) + "'");
}

std::string_view to_string(EmbeddingKind kind) noexcept {
  return kind == EmbeddingKind::image ? "image" : "text";
}

void ModelEndpoint::validate() const {
  auto bad = [&](const std::string& what) {
    fail(ErrorCode::config_error, "endpoint '" + id + "': " + what);
  };
  if (model_id.empty()) bad("model_id is required");
  if (!(temperature >= 0.0 && temperature <= 2.0)) bad("temperature must lie in [0, 2]");
  if (max_tokens <= 0) bad("max_tokens must be positive");
  if (timeout_ms <= 0) bad("timeout_ms must be positive");
  if (retries < 0) bad("retries must be non-negative");
}

ModelEndpoint ModelEndpoint::from_json(const json& j, std::optional<Role> default_role) {
  if (!j.is_object()) fail(ErrorCode::config_error, "endpoint must be a JSON object");
  static const std::set<std::string> known{"id",      "role",    "model_id",      "base_url",
                                           "temperature", "max_tokens", "timeout_ms", "retries",
                                           "supports_seed", "seed", "weak_instruction_following", "prompt"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) fail(ErrorCode::config_error, "unknown endpoint key '" + k + "'");
  ModelEndpoint e;
  try {
    if (j.contains("role"))
      e.role = role_from_string(j.at("role").get<std::string>());
    else if (default_role)
      e.role = *default_role;
    else
      fail(ErrorCode::config_error, "endpoint is missing 'role'");
    e.model_id = j.value("model_id", std::string{});
    e.id = j.value("id", e.model_id);
    e.base_url = j.value("base_url", std::string{});
    e.temperature = j.value("temperature", 0.0);
    e.max_tokens = j.value("max_tokens", 1024);
    e.timeout_ms = j.value("timeout_ms", 60000);
    e.retries = j.value("retries", 2);
    e.supports_seed = j.value("supports_seed", true);
    if (j.contains("seed")) {
      if (j.at("seed").is_null())
        e.seed.reset();
      else
        e.seed = j.at("seed").get<std::int64_t>();
    }
    e.weak_instruction_following = j.value("weak_instruction_following", false);
    e.prompt_template = j.value("prompt", std::string{});
  } catch (const json::exception& ex) {
    fail(ErrorCode::config_error, std::string("bad endpoint field: ") + ex.what());
  }
  e.validate();
  return e;
}

json ModelEndpoint::to_json() const {
  json j{{"id", id},
         {"role", std::string(to_string(role))},
         {"base_url", base_url},
         {"model_id", model_id},
         {"temperature", temperature},
         {"max_tokens", max_tokens},
         {"timeout_ms", timeout_ms},
         {"retries", retries},
         {"supports_seed", supports_seed},
         {"weak_instruction_following", weak_instruction_following}};
  j["seed"] = seed ? json(*seed) : json(nullptr);
  if (!prompt_template.empty()) j["prompt"] = prompt_template;
  return j;
}

json ImageRef::to_json() const {
  json j{{"id", id}};
  switch (source) {
    case Source::file: j["path"] = location; break;
    case Source::url: j["url"] = location; break;
    case Source::base64: j["sha256"] = sha256_hex(location); break;
  }
  return j;
}

ordered_json DetectionReport::to_json() const {
  ordered_json j;
  j["query"] = query;
  j["count"] = count;
  auto boxes_json = ordered_json::array();
  for (const auto& b : boxes) boxes_json.push_back({b.x0, b.y0, b.x1, b.y1});
  j["boxes"] = std::move(boxes_json);
  j["scores"] = scores;
  return j;
}

CacheKey CacheKey::compute(Role role, std::string_view model_id, const json& canonical_body) {
  // nlohmann::json objects are std::map-backed, so dump() emits sorted keys.
  json envelope{{"role", std::string(to_string(role))},
                {"model_id", std::string(model_id)},
                {"body", canonical_body}};
  return CacheKey{sha256_hex(envelope.dump())};
}

}  // namespace vfc
