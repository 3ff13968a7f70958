#include "vfc/gateway.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <thread>

#include "vfc/util.hpp"

namespace vfc {

void ConcurrencyLimiter::acquire() {
  if (limit_ <= 0) return;
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return used_ < limit_; });
  ++used_;
}

void ConcurrencyLimiter::release() {
  if (limit_ <= 0) return;
  {
    std::lock_guard lock(mutex_);
    --used_;
  }
  cv_.notify_one();
}

namespace {

class LimiterGuard {
 public:
  LimiterGuard(ConcurrencyLimiter* a, ConcurrencyLimiter* b) : a_(a), b_(b) {
    if (a_) a_->acquire();
    if (b_) b_->acquire();
  }
  ~LimiterGuard() {
    if (b_) b_->release();
    if (a_) a_->release();
  }
  LimiterGuard(const LimiterGuard&) = delete;
  LimiterGuard& operator=(const LimiterGuard&) = delete;

 private:
  ConcurrencyLimiter* a_;
  ConcurrencyLimiter* b_;
};

bool retriable_status(int status) { return status == 429 || status >= 500; }

int backoff_ms(const RetryPolicy& policy, int attempt) {
  thread_local std::mt19937 rng{std::random_device{}()};
  double ceiling = std::min<double>(policy.max_delay_ms, policy.base_delay_ms * std::pow(2.0, attempt));
  std::uniform_int_distribution<int> dist(0, std::max(0, static_cast<int>(ceiling)));
  return dist(rng);
}

void require_role(const ModelEndpoint& endpoint, std::initializer_list<Role> allowed) {
  for (Role r : allowed)
    if (endpoint.role == r) return;
  fail(ErrorCode::precondition, "endpoint '" + endpoint.id + "' has role " +
                                    std::string(to_string(endpoint.role)) + ", not legal for this request");
}

std::string image_placeholder(const LoadedImage& img) { return "sha256:" + img.digest; }

std::string chat_text(const json& content) {
  if (content.is_string()) return content.get<std::string>();
  if (content.is_array()) {
    std::string out;
    for (const auto& part : content)
      if (part.value("type", std::string{}) == "text") out += part.value("text", std::string{});
    return out;
  }
  fail(ErrorCode::malformed_response, "chat message content is neither text nor parts");
}

}  // namespace

Gateway::Gateway(Transport& transport, ResponseCache& cache, GatewayOptions options)
    : transport_(transport), cache_(cache), options_(std::move(options)) {
  global_limiter_ = std::make_unique<ConcurrencyLimiter>(options_.max_in_flight);
  for (const auto& [role, limit] : options_.role_limits)
    role_limiters_[role] = std::make_unique<ConcurrencyLimiter>(limit);
}

Gateway::~Gateway() = default;

LoadedImage Gateway::load_image(const ImageRef& image) const {
  LoadedImage out;
  switch (image.source) {
    case ImageRef::Source::file: {
      std::error_code ec;
      if (!std::filesystem::is_regular_file(image.location, ec))
        fail(ErrorCode::image_load_error, "image '" + image.id + "' not found: " + image.location);
      try {
        out.bytes = read_file(image.location);
      } catch (const Error& e) {
        fail(ErrorCode::image_load_error, e.what());
      }
      break;
    }
    case ImageRef::Source::url:
      out.bytes = fetch_url_bytes(image.location, options_.image_fetch_timeout_ms);
      break;
    case ImageRef::Source::base64:
      try {
        out.bytes = base64_decode(image.location);
      } catch (const Error& e) {
        fail(ErrorCode::image_load_error, "image '" + image.id + "': " + e.what());
      }
      break;
  }
  if (out.bytes.empty()) fail(ErrorCode::image_load_error, "image '" + image.id + "' is empty");
  out.digest = sha256_hex(out.bytes);
  out.mime = sniff_mime(out.bytes);
  return out;
}

std::string Gateway::send_with_retry(const ModelEndpoint& endpoint, const std::string& path,
                                     const std::string& body, const CacheKey& key) const {
  TransportRequest req;
  req.role = endpoint.role;
  req.endpoint_id = endpoint.id;
  req.model_id = endpoint.model_id;
  req.base_url = endpoint.base_url;
  req.path = path;
  req.body = body;
  req.bearer_token = options_.bearer_token;
  req.timeout_ms = endpoint.timeout_ms;
  req.cache_key = key.digest;

  auto role_it = role_limiters_.find(endpoint.role);
  ConcurrencyLimiter* role_limiter = role_it == role_limiters_.end() ? nullptr : role_it->second.get();

  const int attempts = 1 + endpoint.retries;
  for (int attempt = 0;; ++attempt) {
    const bool last = attempt + 1 >= attempts;
    try {
      TransportResponse res;
      {
        LimiterGuard guard(global_limiter_.get(), role_limiter);
        res = transport_.post(req);
      }
      if (res.status / 100 == 2) return res.body;
      if (!retriable_status(res.status) || last) throw EndpointError(res.status, excerpt(res.body));
      spdlog::debug("{} {} returned {}, retrying", endpoint.id, path, res.status);
    } catch (const TransportError& e) {
      if (last)
        fail(ErrorCode::retriable_exhausted, "endpoint '" + endpoint.id + "' unreachable after " +
                                                 std::to_string(attempts) + " attempts: " + e.what());
      spdlog::debug("{} {}: {}, retrying", endpoint.id, path, e.what());
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms(options_.retry, attempt)));
  }
}

json Gateway::call(const ModelEndpoint& endpoint, const std::string& path, const json& wire,
                   const json& canonical, const Validator& validate) const {
  auto key = CacheKey::compute(endpoint.role, endpoint.model_id, canonical);
  auto raw = cache_.cached_call(key, [&] {
    auto body = send_with_retry(endpoint, path, wire.dump(), key);
    json parsed;
    try {
      parsed = json::parse(body);
    } catch (const json::exception&) {
      fail(ErrorCode::malformed_response, "endpoint '" + endpoint.id + "' returned non-JSON: " + excerpt(body));
    }
    validate(parsed);
    return body;
  });
  return json::parse(raw);
}

std::string Gateway::complete_chat(const ModelEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                                   std::string_view cache_salt) const {
  require_role(endpoint, {Role::llm, Role::captioner, Role::vqa});
  require(!messages.empty(), "complete_chat: messages must be non-empty");

  json wire_msgs = json::array();
  json canon_msgs = json::array();
  for (const auto& m : messages) {
    if (m.images.empty()) {
      wire_msgs.push_back({{"role", m.role}, {"content", m.text}});
      canon_msgs.push_back({{"role", m.role}, {"content", m.text}});
      continue;
    }
    json wire_parts = json::array({{{"type", "text"}, {"text", m.text}}});
    json canon_parts = wire_parts;
    for (const auto& img : m.images) {
      auto loaded = load_image(img);
      wire_parts.push_back({{"type", "image_url"},
                            {"image_url", {{"url", "data:" + loaded.mime + ";base64," + base64_encode(loaded.bytes)}}}});
      canon_parts.push_back({{"type", "image_url"}, {"image_url", {{"url", image_placeholder(loaded)}}}});
    }
    wire_msgs.push_back({{"role", m.role}, {"content", wire_parts}});
    canon_msgs.push_back({{"role", m.role}, {"content", canon_parts}});
  }

  json wire{{"model", endpoint.model_id},
            {"messages", wire_msgs},
            {"temperature", endpoint.temperature},
            {"max_tokens", endpoint.max_tokens}};
  if (endpoint.supports_seed && endpoint.seed) wire["seed"] = *endpoint.seed;
  json canonical = wire;
  canonical["messages"] = canon_msgs;
  if (!cache_salt.empty()) canonical["cache_salt"] = std::string(cache_salt);

  auto reply = call(endpoint, "/v1/chat/completions", wire, canonical, [&](const json& r) {
    if (!r.contains("choices") || !r.at("choices").is_array() || r.at("choices").empty())
      fail(ErrorCode::malformed_response, "endpoint '" + endpoint.id + "' returned no choices");
    const auto& first = r.at("choices").at(0);
    if (!first.contains("message") || !first.at("message").contains("content") ||
        first.at("message").at("content").is_null())
      fail(ErrorCode::malformed_response, "endpoint '" + endpoint.id + "' returned a choice without content");
    chat_text(first.at("message").at("content"));
  });
  return chat_text(reply.at("choices").at(0).at("message").at("content"));
}

std::vector<DetectionReport> Gateway::detect_objects(const ModelEndpoint& endpoint, const ImageRef& image,
                                                     const std::vector<std::string>& queries,
                                                     double box_threshold, double text_threshold) const {
  require_role(endpoint, {Role::detector});
  require(!queries.empty(), "detect_objects: queries must be non-empty");
  std::vector<std::string> cleaned;
  for (const auto& q : queries) {
    auto t = trim(q);
    require(!t.empty(), "detect_objects: empty query");
    cleaned.push_back(std::move(t));
  }

  auto loaded = load_image(image);
  json wire{{"image_b64", base64_encode(loaded.bytes)},
            {"queries", cleaned},
            {"box_threshold", box_threshold},
            {"text_threshold", text_threshold}};
  json canonical = wire;
  canonical["image_b64"] = image_placeholder(loaded);

  auto reply = call(endpoint, "/detect", wire, canonical, [&](const json& r) {
    if (!r.contains("results") || !r.at("results").is_array())
      fail(ErrorCode::malformed_response, "detector reply lacks 'results'");
    for (const auto& res : r.at("results")) {
      if (!res.contains("query") || !res.contains("boxes") || !res.contains("scores") ||
          res.at("boxes").size() != res.at("scores").size())
        fail(ErrorCode::malformed_response, "detector result has mismatched boxes/scores");
      for (const auto& b : res.at("boxes"))
        if (!b.is_array() || b.size() != 4) fail(ErrorCode::malformed_response, "detector box is not [x0,y0,x1,y1]");
    }
  });

  std::vector<DetectionReport> reports;
  reports.reserve(cleaned.size());
  for (const auto& q : cleaned) {
    DetectionReport rep;
    rep.query = q;
    for (const auto& res : reply.at("results")) {
      if (res.at("query").get<std::string>() != q) continue;
      const auto& boxes = res.at("boxes");
      const auto& scores = res.at("scores");
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        double score = std::clamp(scores.at(i).get<double>(), 0.0, 1.0);
        if (score < box_threshold) continue;
        auto c = [&](std::size_t k) { return std::clamp(boxes.at(i).at(k).get<double>(), 0.0, 1.0); };
        Box box{c(0), c(1), c(2), c(3)};
        if (!(box.x0 < box.x1 && box.y0 < box.y1)) continue;
        rep.boxes.push_back(box);
        rep.scores.push_back(score);
      }
      break;
    }
    rep.count = static_cast<int>(rep.boxes.size());
    reports.push_back(std::move(rep));
  }
  return reports;
}

EmbeddingVector Gateway::embed(const ModelEndpoint& endpoint, EmbeddingKind kind,
                               const std::variant<ImageRef, std::string>& payload) const {
  require_role(endpoint, {Role::embedder});
  json wire{{"kind", std::string(to_string(kind))}};
  json canonical = wire;
  if (kind == EmbeddingKind::text) {
    const auto* text = std::get_if<std::string>(&payload);
    require(text != nullptr, "embed: text kind requires a string payload");
    require(!trim(*text).empty(), "embed: text payload must be non-empty");
    wire["text"] = *text;
    canonical["text"] = *text;
  } else {
    const auto* image = std::get_if<ImageRef>(&payload);
    require(image != nullptr, "embed: image kind requires an image payload");
    auto loaded = load_image(*image);
    wire["image_b64"] = base64_encode(loaded.bytes);
    canonical["image_b64"] = image_placeholder(loaded);
  }

  auto reply = call(endpoint, "/embed", wire, canonical, [&](const json& r) {
    if (!r.contains("vector") || !r.at("vector").is_array() || r.at("vector").empty())
      fail(ErrorCode::malformed_response, "embedder reply lacks a non-empty 'vector'");
    for (const auto& x : r.at("vector"))
      if (!x.is_number() || !std::isfinite(x.get<double>()))
        fail(ErrorCode::malformed_response, "embedder returned a non-finite entry");
  });

  EmbeddingVector v;
  v.values = reply.at("vector").get<std::vector<double>>();
  v.model_id = endpoint.model_id;
  v.kind = kind;
  std::lock_guard lock(dims_mutex_);
  auto [it, inserted] = dims_.emplace(endpoint.model_id, v.dimension());
  if (!inserted && it->second != v.dimension())
    fail(ErrorCode::dimension_error, "embedder '" + endpoint.model_id + "' returned dimension " +
                                         std::to_string(v.dimension()) + ", expected " + std::to_string(it->second));
  return v;
}

ImageRef Gateway::persist_generated(const std::string& bytes) const {
  auto digest = sha256_hex(bytes);
  auto id = "gen-" + digest.substr(0, 16);
  if (options_.artifact_dir.empty()) return ImageRef::inline_base64(id, base64_encode(bytes));
  auto path = options_.artifact_dir / "generated" / (digest + extension_for_mime(sniff_mime(bytes)));
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) write_file_atomic(path, bytes);
  return ImageRef::file(id, path.string());
}

namespace {

void validate_generation(const json& r, const char* field) {
  if (r.value("refused", false) || r.contains("refusal")) return;
  if (!r.contains(field)) fail(ErrorCode::malformed_response, std::string("generator reply lacks '") + field + "'");
}

template <typename F>
json refusal_aware(F&& f, const std::string& prompt) {
  try {
    return f();
  } catch (const EndpointError& e) {
    if (e.body_excerpt().find("content_policy") != std::string::npos)
      fail(ErrorCode::generation_refused, "generation refused for caption: " + excerpt(prompt, 80));
    throw;
  }
}

void check_refusal(const json& r, const std::string& prompt) {
  bool policy = r.contains("error") && r.at("error").is_object() &&
                r.at("error").value("code", std::string{}).find("content_policy") != std::string::npos;
  if (r.value("refused", false) || r.contains("refusal") || policy)
    fail(ErrorCode::generation_refused, "generation refused for caption: " + excerpt(prompt, 80));
}

}  // namespace

ImageRef Gateway::generate_image(const ModelEndpoint& endpoint, const std::string& prompt,
                                 std::optional<std::int64_t> seed) const {
  require_role(endpoint, {Role::image_gen});
  require(!trim(prompt).empty(), "generate_image: prompt must be non-empty");
  json wire{{"prompt", prompt}, {"size", options_.image_size}};
  if (seed) wire["seed"] = *seed;
  // A refusal is a valid, cacheable reply; it is raised after the cache.
  auto reply = refusal_aware([&] {
    return call(endpoint, "/generate", wire, wire, [](const json& r) { validate_generation(r, "image_b64"); });
  }, prompt);
  check_refusal(reply, prompt);
  auto bytes = base64_decode(reply.at("image_b64").get<std::string>());
  if (bytes.empty()) fail(ErrorCode::malformed_response, "generator returned an empty image");
  return persist_generated(bytes);
}

std::vector<ImageRef> Gateway::generate_views3d(const ModelEndpoint& endpoint, const std::string& prompt,
                                                const std::vector<ViewAngle>& views,
                                                std::optional<std::int64_t> seed) const {
  require_role(endpoint, {Role::view3d_gen});
  require(!trim(prompt).empty(), "generate_views3d: prompt must be non-empty");
  require(!views.empty(), "generate_views3d: at least one view is required");
  json jviews = json::array();
  for (const auto& v : views) jviews.push_back({{"azimuth", v.azimuth_deg}, {"elevation", v.elevation_deg}});
  json wire{{"prompt", prompt}, {"views", jviews}};
  if (seed) wire["seed"] = *seed;
  auto reply = refusal_aware([&] {
    return call(endpoint, "/generate3d", wire, wire, [](const json& r) { validate_generation(r, "images_b64"); });
  }, prompt);
  check_refusal(reply, prompt);
  const auto& images = reply.at("images_b64");
  if (!images.is_array() || images.size() != views.size())
    fail(ErrorCode::malformed_response, "view generator returned " + std::to_string(images.size()) +
                                            " images for " + std::to_string(views.size()) + " views");
  std::vector<ImageRef> out;
  for (const auto& b64 : images) {
    auto bytes = base64_decode(b64.get<std::string>());
    if (bytes.empty()) fail(ErrorCode::malformed_response, "view generator returned an empty image");
    out.push_back(persist_generated(bytes));
  }
  return out;
}

}  // namespace vfc
