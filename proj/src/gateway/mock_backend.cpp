#include "vfc/mock_backend.hpp"

#include <algorithm>
#include <regex>
#include <thread>

#include "vfc/util.hpp"

namespace vfc {
namespace {

std::vector<std::string> as_string_list(const json& j) {
  if (j.is_string()) return {j.get<std::string>()};
  if (j.is_array()) return j.get<std::vector<std::string>>();
  return {};
}

json chat_reply(const std::string& model, const std::string& text) {
  return json{{"id", "mock"},
              {"object", "chat.completion"},
              {"model", model},
              {"choices", json::array({json{{"index", 0},
                                            {"message", {{"role", "assistant"}, {"content", text}}},
                                            {"finish_reason", "stop"}}})}};
}

std::string digest_of_data_url(const std::string& url) {
  auto comma = url.find(',');
  if (comma == std::string::npos) return sha256_hex(url);
  return sha256_hex(base64_decode(std::string_view(url).substr(comma + 1)));
}

}  // namespace

std::vector<double> bag_of_words_embedding(const std::string& text, const std::vector<std::string>& vocab) {
  std::vector<double> v;
  v.reserve(vocab.size() + 1);
  const auto lower = to_lower(text);
  for (const auto& word : vocab) {
    std::regex re("\\b" + regex_escape(to_lower(word)) + "(s|es)?\\b");
    auto n = std::distance(std::sregex_iterator(lower.begin(), lower.end(), re), std::sregex_iterator());
    v.push_back(static_cast<double>(n));
  }
  v.push_back(1.0);
  return v;
}

MockTransport::MockTransport(json fixtures, std::filesystem::path base_dir)
    : base_dir_(std::move(base_dir)) {
  if (!fixtures.is_object()) fail(ErrorCode::config_error, "mock fixtures must be a JSON object");
  delay_ms_ = fixtures.value("delay_ms", 0);
  digests_ = fixtures.value("digests", json::object());
  auto load_b64 = [&](const std::string& rel) { return base64_encode(read_file(base_dir_ / rel)); };
  for (const auto& spec : fixtures.value("rules", json::array())) {
    Rule rule;
    rule.spec = spec;
    if (spec.contains("image")) rule.image_digest = spec.at("image").get<std::string>();
    if (spec.contains("match_image_file"))
      rule.image_digest = sha256_hex(read_file(base_dir_ / spec.at("match_image_file").get<std::string>()));
    if (spec.contains("image_file")) rule.image_file_b64 = load_b64(spec.at("image_file").get<std::string>());
    for (const auto& f : as_string_list(spec.value("image_files", json::array())))
      rule.image_files_b64.push_back(load_b64(f));
    rule.fail_times = spec.value("fail_times", -1);
    rules_.push_back(std::move(rule));
  }
}

MockTransport MockTransport::from_file(const std::filesystem::path& path) {
  json fixtures;
  try {
    fixtures = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::config_error, "cannot parse mock fixtures " + path.string() + ": " + e.what());
  }
  return MockTransport(std::move(fixtures), path.parent_path());
}

MockTransport::ParsedRequest MockTransport::parse(const TransportRequest& request) const {
  ParsedRequest p;
  p.body = json::parse(request.body);
  const auto& b = p.body;
  if (request.path == "/v1/chat/completions") {
    std::vector<std::string> texts;
    for (const auto& m : b.value("messages", json::array())) {
      const auto& content = m.at("content");
      if (content.is_string()) {
        texts.push_back(content.get<std::string>());
        continue;
      }
      for (const auto& part : content) {
        auto type = part.value("type", std::string{});
        if (type == "text") texts.push_back(part.value("text", std::string{}));
        if (type == "image_url") p.image_digests.push_back(digest_of_data_url(part.at("image_url").at("url")));
      }
    }
    p.text = join(texts, "\n");
  } else if (request.path == "/detect") {
    p.text = join(b.value("queries", std::vector<std::string>{}), ". ");
    p.image_digests.push_back(sha256_hex(base64_decode(b.value("image_b64", std::string{}))));
  } else if (request.path == "/embed") {
    p.kind = b.value("kind", std::string{});
    if (b.contains("text")) p.text = b.at("text").get<std::string>();
    if (b.contains("image_b64"))
      p.image_digests.push_back(sha256_hex(base64_decode(b.at("image_b64").get<std::string>())));
  } else if (request.path == "/generate" || request.path == "/generate3d") {
    p.text = b.value("prompt", std::string{});
  }
  return p;
}

bool MockTransport::matches(const Rule& rule, const TransportRequest& request,
                            const ParsedRequest& parsed) const {
  const auto& s = rule.spec;
  if (s.contains("role") && s.at("role").get<std::string>() != to_string(request.role)) return false;
  if (s.contains("model") && s.at("model").get<std::string>() != request.model_id) return false;
  if (s.contains("endpoint") && s.at("endpoint").get<std::string>() != request.endpoint_id) return false;
  if (s.contains("path") && s.at("path").get<std::string>() != request.path) return false;
  if (s.contains("kind") && s.at("kind").get<std::string>() != parsed.kind) return false;
  if (s.contains("equals") && s.at("equals").get<std::string>() != parsed.text) return false;
  for (const auto& needle : as_string_list(s.value("contains", json())))
    if (parsed.text.find(needle) == std::string::npos) return false;
  for (const auto& needle : as_string_list(s.value("not_contains", json())))
    if (parsed.text.find(needle) != std::string::npos) return false;
  if (rule.image_digest &&
      std::find(parsed.image_digests.begin(), parsed.image_digests.end(), *rule.image_digest) ==
          parsed.image_digests.end())
    return false;
  return true;
}

TransportResponse MockTransport::respond(const Rule& rule, const TransportRequest& request,
                                         const ParsedRequest& parsed) const {
  const auto& s = rule.spec;
  const int status = s.value("status", 200);
  if (s.contains("response")) return {status, s.at("response").dump()};
  if (s.value("refused", false))
    return {status, json{{"refused", true}, {"message", "request rejected by safety filter"}}.dump()};

  if (request.path == "/v1/chat/completions") {
    if (s.value("choices_empty", false)) return {status, json{{"choices", json::array()}}.dump()};
    return {status, chat_reply(request.model_id, s.value("text", std::string{})).dump()};
  }
  if (request.path == "/detect") {
    const auto detect = s.value("detect", json::object());
    json results = json::array();
    for (const auto& q : parsed.body.value("queries", std::vector<std::string>{})) {
      json boxes = json::array();
      json scores = json::array();
      if (detect.contains(q)) {
        for (const auto& row : detect.at(q)) {
          boxes.push_back({row.at(0), row.at(1), row.at(2), row.at(3)});
          scores.push_back(row.size() > 4 ? row.at(4) : json(0.9));
        }
      }
      results.push_back({{"query", q}, {"boxes", boxes}, {"scores", scores}});
    }
    return {status, json{{"results", results}}.dump()};
  }
  if (request.path == "/embed") {
    std::vector<double> v;
    if (s.contains("vector"))
      v = s.at("vector").get<std::vector<double>>();
    else if (s.contains("bow_vocab"))
      v = bag_of_words_embedding(parsed.text, s.at("bow_vocab").get<std::vector<std::string>>());
    return {status, json{{"vector", v}, {"model", request.model_id}}.dump()};
  }
  if (request.path == "/generate") {
    auto b64 = !rule.image_file_b64.empty() ? rule.image_file_b64 : s.value("image_b64", std::string{});
    return {status, json{{"image_b64", b64}}.dump()};
  }
  if (request.path == "/generate3d") {
    auto images = !rule.image_files_b64.empty() ? rule.image_files_b64
                                                : s.value("images_b64", std::vector<std::string>{});
    return {status, json{{"images_b64", images}}.dump()};
  }
  return {404, R"({"error":"unknown mock path"})"};
}

TransportResponse MockTransport::post(const TransportRequest& request) {
  struct InFlight {
    MockTransport& self;
    explicit InFlight(MockTransport& s) : self(s) {
      int now = ++self.in_flight_;
      int prev = self.max_in_flight_.load();
      while (now > prev && !self.max_in_flight_.compare_exchange_weak(prev, now)) {
      }
    }
    ~InFlight() { --self.in_flight_; }
  } guard(*this);

  CallRecord rec;
  rec.role = request.role;
  rec.endpoint_id = request.endpoint_id;
  rec.model_id = request.model_id;
  rec.path = request.path;
  rec.cache_key = request.cache_key;
  rec.start = std::chrono::steady_clock::now();

  ParsedRequest parsed = parse(request);
  rec.request_text = parsed.text;

  TransportResponse response{404, json{{"error", "no mock fixture matched"},
                                       {"role", std::string(to_string(request.role))},
                                       {"cache_key", request.cache_key}}
                                      .dump()};
  bool transport_failure = false;
  int delay = delay_ms_;

  if (digests_.contains(request.cache_key)) {
    response = {200, digests_.at(request.cache_key).dump()};
    rec.rule_index = -2;
  } else {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      auto& rule = rules_[i];
      if (!matches(rule, request, parsed)) continue;
      const auto& s = rule.spec;
      const bool is_failure = s.contains("fail") || s.value("transport_error", false);
      if (is_failure) {
        bool active = rule.fail_times < 0 || rule.failures_served < rule.fail_times;
        if (active) {
          ++rule.failures_served;
          rec.rule_index = static_cast<int>(i);
          delay = s.value("delay_ms", delay);
          if (s.value("transport_error", false)) {
            transport_failure = true;
          } else {
            const auto& f = s.at("fail");
            response = {f.value("status", 500), f.value("body", std::string("mock failure"))};
          }
          break;
        }
        bool has_success = s.contains("text") || s.contains("response") || s.contains("detect") ||
                           s.contains("vector") || s.contains("bow_vocab") ||
                           !rule.image_file_b64.empty() || !rule.image_files_b64.empty();
        if (!has_success) continue;
      }
      rec.rule_index = static_cast<int>(i);
      delay = s.value("delay_ms", delay);
      response = respond(rule, request, parsed);
      break;
    }
  }

  if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
  rec.end = std::chrono::steady_clock::now();
  {
    std::lock_guard lock(mutex_);
    rec.seq = log_.size();
    log_.push_back(std::move(rec));
  }
  if (transport_failure) throw TransportError("mock transport error");
  return response;
}

std::vector<MockTransport::CallRecord> MockTransport::calls() const {
  std::lock_guard lock(mutex_);
  return log_;
}

std::size_t MockTransport::call_count() const {
  std::lock_guard lock(mutex_);
  return log_.size();
}

void MockTransport::reset_log() {
  std::lock_guard lock(mutex_);
  log_.clear();
  max_in_flight_ = 0;
}

}  // namespace vfc
