#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "vfc/transport.hpp"

namespace vfc {

/// Offline backend driven by a fixtures document.
///
/// Fixture layout:
///   {
///     "delay_ms": 0,                       // optional per-call latency
///     "digests": {"<cache key>": {...}},   // raw responses keyed by CacheKey digest
///     "rules": [ {...}, ... ]              // first match wins, in order
///   }
///
/// A rule matches on any of: "role", "model", "endpoint", "path", "kind", "contains"
/// (string or list; all must occur in the request text), "not_contains", "equals",
/// "image" (sha256 of image bytes) or "match_image_file" (path, digested at load).
/// It answers with "response" (raw JSON), or a role shorthand: "text" (chat),
/// "choices_empty", "detect" ({query: [[x0,y0,x1,y1,score], ...]}), "vector" or
/// "bow_vocab" (embedder), "image_file"/"image_b64" (image_gen), "image_files"/
/// "images_b64" (view3d_gen), "refused". Failures: "fail": {"status", "body"} or
/// "transport_error": true, optionally limited to the first "fail_times" matches.
class MockTransport final : public Transport {
 public:
  struct CallRecord {
    std::size_t seq = 0;
    Role role = Role::llm;
    std::string endpoint_id;
    std::string model_id;
    std::string path;
    std::string cache_key;
    std::string request_text;
    int rule_index = -1;
    std::chrono::steady_clock::time_point start;
    std::chrono::steady_clock::time_point end;
  };

  MockTransport(json fixtures, std::filesystem::path base_dir);
  static MockTransport from_file(const std::filesystem::path& path);

  TransportResponse post(const TransportRequest& request) override;

  std::vector<CallRecord> calls() const;
  std::size_t call_count() const;
  int max_in_flight() const noexcept { return max_in_flight_.load(); }
  void reset_log();

 private:
  struct Rule {
    json spec;
    std::optional<std::string> image_digest;
    std::vector<std::string> image_files_b64;
    std::string image_file_b64;
    int fail_times = -1;
    int failures_served = 0;
  };
  struct ParsedRequest {
    std::string text;
    std::vector<std::string> image_digests;
    std::string kind;
    json body;
  };

  ParsedRequest parse(const TransportRequest& request) const;
  bool matches(const Rule& rule, const TransportRequest& request, const ParsedRequest& parsed) const;
  TransportResponse respond(const Rule& rule, const TransportRequest& request, const ParsedRequest& parsed) const;

  std::filesystem::path base_dir_;
  int delay_ms_ = 0;
  json digests_;
  std::vector<Rule> rules_;

  mutable std::mutex mutex_;
  std::vector<CallRecord> log_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

/// Deterministic bag-of-words text embedding: one count per vocabulary word
/// (word-boundary, case-insensitive, plural "s"/"es" folded) plus a constant bias dimension.
std::vector<double> bag_of_words_embedding(const std::string& text, const std::vector<std::string>& vocab);

}  // namespace vfc
