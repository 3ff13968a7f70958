#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace vfc {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

enum class Role { captioner, llm, detector, vqa, embedder, image_gen, view3d_gen };

std::string_view to_string(Role role) noexcept;
/// Throws Error(config_error) for unknown names.
Role role_from_string(std::string_view name);

/// Role-tagged remote model descriptor.
struct ModelEndpoint {
  std::string id;  // logical name within a run, e.g. "llava"
  Role role = Role::llm;
  std::string base_url;
  std::string model_id;
  double temperature = 0.0;
  int max_tokens = 1024;
  int timeout_ms = 60000;
  int retries = 2;
  std::optional<std::int64_t> seed = 0;   // sent when supports_seed
  bool supports_seed = true;
  bool weak_instruction_following = false;
  std::string prompt_template;  // proposal template id, captioners only

  /// Throws Error(config_error) when a field is out of range.
  void validate() const;
  static ModelEndpoint from_json(const json& j, std::optional<Role> default_role = std::nullopt);
  json to_json() const;
};

/// A reference to image bytes. Exactly one source form is set.
struct ImageRef {
  enum class Source { file, url, base64 };

  std::string id;
  Source source = Source::file;
  std::string location;  // path, URL, or base64 payload
  std::optional<int> width;
  std::optional<int> height;

  static ImageRef file(std::string id, std::string path) {
    return {std::move(id), Source::file, std::move(path), {}, {}};
  }
  static ImageRef url(std::string id, std::string u) {
    return {std::move(id), Source::url, std::move(u), {}, {}};
  }
  static ImageRef inline_base64(std::string id, std::string b64) {
    return {std::move(id), Source::base64, std::move(b64), {}, {}};
  }

  json to_json() const;
};

struct Box {
  double x0, y0, x1, y1;
};

struct DetectionReport {
  std::string query;
  int count = 0;
  std::vector<Box> boxes;
  std::vector<double> scores;

  bool operator==(const DetectionReport&) const = default;
  ordered_json to_json() const;
};

inline bool operator==(const Box& a, const Box& b) {
  return a.x0 == b.x0 && a.y0 == b.y0 && a.x1 == b.x1 && a.y1 == b.y1;
}

enum class EmbeddingKind { image, text };
std::string_view to_string(EmbeddingKind kind) noexcept;

struct EmbeddingVector {
  std::vector<double> values;
  std::string model_id;
  EmbeddingKind kind = EmbeddingKind::image;

  std::size_t dimension() const noexcept { return values.size(); }
};

/// Content digest over (role, model_id, canonical request body).
struct CacheKey {
  std::string digest;

  static CacheKey compute(Role role, std::string_view model_id, const json& canonical_body);
  bool operator==(const CacheKey&) const = default;
};

struct ViewAngle {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
};

}  // namespace vfc
