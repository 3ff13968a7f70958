#include <httplib.h>

#include "vfc/transport.hpp"
#include "vfc/util.hpp"

namespace vfc {
namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorCode::config_error, "base_url lacks a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.origin = url;
  } else {
    out.origin = url.substr(0, path_start);
    out.prefix = url.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  }
  return out;
}

void configure(httplib::Client& client, int timeout_ms) {
  auto sec = timeout_ms / 1000;
  auto usec = (timeout_ms % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
  client.set_follow_location(true);
}

}  // namespace

TransportResponse HttpTransport::post(const TransportRequest& request) {
  auto url = split_url(request.base_url);
  httplib::Client client(url.origin);
  configure(client, request.timeout_ms);
  httplib::Headers headers;
  if (!request.bearer_token.empty())
    headers.emplace("Authorization", "Bearer " + request.bearer_token);
  auto res = client.Post(url.prefix + request.path, headers, request.body, "application/json");
  if (!res) throw TransportError(httplib::to_string(res.error()) + " (" + request.base_url + ")");
  return {res->status, res->body};
}

TransportResponse OfflineTransport::post(const TransportRequest& request) {
  fail(ErrorCode::endpoint_error, "offline replay: no cached response for " +
                                      std::string(to_string(request.role)) + " request " +
                                      request.cache_key);
}

std::string fetch_url_bytes(const std::string& url, int timeout_ms) {
  if (url.rfind("data:", 0) == 0) {
    auto comma = url.find(',');
    if (comma == std::string::npos || url.find(";base64") > comma)
      fail(ErrorCode::image_load_error, "unsupported data URL");
    try {
      return base64_decode(std::string_view(url).substr(comma + 1));
    } catch (const Error& e) {
      fail(ErrorCode::image_load_error, e.what());
    }
  }
  SplitUrl parts;
  try {
    parts = split_url(url);
  } catch (const Error& e) {
    fail(ErrorCode::image_load_error, e.what());
  }
  httplib::Client client(parts.origin);
  configure(client, timeout_ms);
  auto res = client.Get(parts.prefix.empty() ? "/" : parts.prefix);
  if (!res) fail(ErrorCode::image_load_error, "cannot fetch " + url + ": " + httplib::to_string(res.error()));
  if (res->status / 100 != 2)
    fail(ErrorCode::image_load_error, "cannot fetch " + url + ": HTTP " + std::to_string(res->status));
  return res->body;
}

}  // namespace vfc
