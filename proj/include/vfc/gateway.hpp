#pragma once

#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vfc/cache.hpp"
#include "vfc/transport.hpp"
#include "vfc/types.hpp"

namespace vfc {

/// Counting semaphore with a runtime limit. A limit <= 0 never blocks.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(int limit = 0) : limit_(limit) {}
  void acquire();
  void release();

 private:
  int limit_;
  int used_ = 0;
  std::mutex mutex_;
  std::condition_variable cv_;
};

struct RetryPolicy {
  int base_delay_ms = 250;
  int max_delay_ms = 8000;
};

struct GatewayOptions {
  RetryPolicy retry;
  int max_in_flight = 0;               // all roles together; 0 = unbounded
  std::map<Role, int> role_limits;     // per role; absent = unbounded
  std::filesystem::path artifact_dir;  // generated images land here; empty = inline base64
  std::string bearer_token;
  std::string image_size = "1024x1024";
  int image_fetch_timeout_ms = 30000;
};

struct ChatMessage {
  std::string role = "user";
  std::string text;
  std::vector<ImageRef> images;
};

struct LoadedImage {
  std::string bytes;
  std::string digest;
  std::string mime;
};

/// Uniform client for every remote model role.
///
/// All calls go through the response cache keyed on (role, model_id, canonical body), where
/// the canonical body is the wire body with sorted keys and image payloads replaced by their
/// sha256 digest. Only responses that parse and validate are stored. Transport failures and
/// HTTP 429/5xx are retried with exponential backoff and full jitter.
class Gateway {
 public:
  Gateway(Transport& transport, ResponseCache& cache, GatewayOptions options = {});
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// `cache_salt` distinguishes deliberate re-asks (e.g. a judging retry) in the cache key.
  std::string complete_chat(const ModelEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                            std::string_view cache_salt = {}) const;

  std::vector<DetectionReport> detect_objects(const ModelEndpoint& endpoint, const ImageRef& image,
                                              const std::vector<std::string>& queries,
                                              double box_threshold = 0.35,
                                              double text_threshold = 0.25) const;

  EmbeddingVector embed(const ModelEndpoint& endpoint, EmbeddingKind kind,
                        const std::variant<ImageRef, std::string>& payload) const;
  EmbeddingVector embed_image(const ModelEndpoint& endpoint, const ImageRef& image) const {
    return embed(endpoint, EmbeddingKind::image, image);
  }
  EmbeddingVector embed_text(const ModelEndpoint& endpoint, const std::string& text) const {
    return embed(endpoint, EmbeddingKind::text, text);
  }

  ImageRef generate_image(const ModelEndpoint& endpoint, const std::string& prompt,
                          std::optional<std::int64_t> seed = std::nullopt) const;

  std::vector<ImageRef> generate_views3d(const ModelEndpoint& endpoint, const std::string& prompt,
                                         const std::vector<ViewAngle>& views,
                                         std::optional<std::int64_t> seed = std::nullopt) const;

  std::string cached_call(const CacheKey& key, const std::function<std::string()>& thunk) const {
    return cache_.cached_call(key, thunk);
  }

  /// Reads image bytes. Throws Error(image_load_error) for unreadable or empty images.
  LoadedImage load_image(const ImageRef& image) const;

  const GatewayOptions& options() const noexcept { return options_; }

 private:
  using Validator = std::function<void(const json&)>;

  json call(const ModelEndpoint& endpoint, const std::string& path, const json& wire,
            const json& canonical, const Validator& validate) const;
  std::string send_with_retry(const ModelEndpoint& endpoint, const std::string& path,
                              const std::string& body, const CacheKey& key) const;
  ImageRef persist_generated(const std::string& bytes) const;

  Transport& transport_;
  ResponseCache& cache_;
  GatewayOptions options_;
  std::unique_ptr<ConcurrencyLimiter> global_limiter_;
  std::map<Role, std::unique_ptr<ConcurrencyLimiter>> role_limiters_;
  mutable std::mutex dims_mutex_;
  mutable std::map<std::string, std::size_t> dims_;
};

}  // namespace vfc
