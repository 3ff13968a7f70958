#pragma once

#include <string>

#include "vfc/error.hpp"
#include "vfc/types.hpp"

namespace vfc {

struct TransportRequest {
  Role role = Role::llm;
  std::string endpoint_id;
  std::string model_id;
  std::string base_url;
  std::string path;  // e.g. "/v1/chat/completions"
  std::string body;  // wire JSON
  std::string bearer_token;
  int timeout_ms = 60000;
  std::string cache_key;  // digest, lets the mock backend serve digest-keyed fixtures
};

struct TransportResponse {
  int status = 0;
  std::string body;
};

/// Connection-level failure (refused, reset, timeout). Always retriable.
class TransportError : public Error {
 public:
  explicit TransportError(const std::string& message)
      : Error(ErrorCode::endpoint_error, "transport failure: " + message) {}
};

class Transport {
 public:
  virtual ~Transport() = default;
  /// Returns any HTTP reply; throws TransportError when no reply was received.
  virtual TransportResponse post(const TransportRequest& request) = 0;
};

/// Live HTTP(S) transport over cpp-httplib. Stateless; safe to share across threads.
class HttpTransport final : public Transport {
 public:
  TransportResponse post(const TransportRequest& request) override;
};

/// Refuses every request; used to replay a run strictly from a warm cache.
class OfflineTransport final : public Transport {
 public:
  TransportResponse post(const TransportRequest& request) override;
};

/// Fetches `http(s)://` or `data:` URLs. Throws Error(image_load_error) on failure.
std::string fetch_url_bytes(const std::string& url, int timeout_ms);

}  // namespace vfc
