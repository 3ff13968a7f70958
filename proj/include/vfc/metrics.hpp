#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vfc/gateway.hpp"
#include "vfc/parsers.hpp"
#include "vfc/pipeline.hpp"
#include "vfc/types.hpp"

namespace vfc {

/// a·b / (|a||b|), clamped to [-1, 1].
/// Throws Error(dimension_error) on unequal sizes, Error(degenerate_vector) on a zero norm.
double cosine(const std::vector<double>& a, const std::vector<double>& b);
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

enum class ClipScoreMode { cosine100, ref25 };
std::string_view to_string(ClipScoreMode m) noexcept;
ClipScoreMode clip_score_mode_from_string(std::string_view s);

/// cosine100: 100·cos. ref25: 100·2.5·max(cos, 0).
double scale_clip_score(double cos, ClipScoreMode mode);

/// Rough token count for CLIP-style text encoders: words and punctuation marks.
std::size_t estimate_tokens(std::string_view text);

double clip_score(const Gateway& gw, const ModelEndpoint& embedder, const ImageRef& image,
                  const std::string& caption, ClipScoreMode mode = ClipScoreMode::cosine100,
                  std::size_t token_warn_threshold = 77);

/// Reconstruction seed fixed per (item, method): low 31 bits of sha256("item|method").
std::int64_t reconstruction_seed(const std::string& item_id, const std::string& method_id);

struct ClipImageResult {
  std::optional<double> score;    // null when generation was refused
  std::vector<double> per_view;   // 3D only
  std::int64_t seed = 0;
  std::optional<std::string> error;
};

/// 100·cos(embed(original), embed(generate_image(caption))).
ClipImageResult clip_image_score(const Gateway& gw, const ModelEndpoint& embedder, const ModelEndpoint& image_gen,
                                 const ImageRef& original, const std::string& caption, std::int64_t seed);

/// Generates the same view angles as the originals, scores each view, returns the mean.
ClipImageResult clip_image_score(const Gateway& gw, const ModelEndpoint& embedder, const ModelEndpoint& view3d_gen,
                                 const ObjectViews& original, const std::string& caption, std::int64_t seed);

struct WinRateResult {
  int wins = 0;
  int losses = 0;
  int ties = 0;
  int n = 0;
  double rate = 0.0;  // (wins + 0.5·ties) / n
};

/// Throws Error(alignment_error) on length mismatch or empty input.
WinRateResult winning_rate(const std::vector<double>& ours, const std::vector<double>& baseline);

enum class Pick { a, b };

/// Majority over an odd-sized group. Throws Error(config_error) for even group sizes and
/// Error(precondition) when votes.size() != group_size.
Pick aggregate_majority(const std::vector<Pick>& votes, int group_size);

/// One LLM-judge outcome. 2D carries per-candidate verdicts, 3D a single choice.
struct Judgment {
  std::string item_id;
  std::string judge_id;
  std::string kind;  // "2d" or "3d"
  std::vector<std::string> candidate_methods;  // 2D: candidates in slot order; 3D: [caption1, caption2]
  std::string reference_method;                // 2D only
  std::vector<JudgeVerdict> verdicts;
  std::optional<CaptionChoice> choice;
  std::vector<std::string> raw_responses;
  bool judged = false;
  std::optional<std::string> error;

  ordered_json to_json() const;
  static Judgment from_json(const json& j);
};

/// Renders the 2D judge prompt (unused slots "N/A"), parses the used slots, retries once.
Judgment judge_2d(const Gateway& gw, const ModelEndpoint& llm, const ImageRef& image, const std::string& reference,
                  const std::vector<std::string>& candidates);

/// caption1/caption2 fill the two template slots in order.
Judgment judge_3d(const Gateway& gw, const ModelEndpoint& llm, const std::vector<ImageRef>& views,
                  const std::string& caption1, const std::string& caption2);

/// One (item, method) score line.
struct ScoreRow {
  std::string item_id;
  std::string method_id;
  std::optional<double> clip_score;
  std::optional<double> clip_image_score;
  std::optional<std::int64_t> seed;
  std::optional<std::string> error;

  ordered_json to_json() const;
  static ScoreRow from_json(const json& j);
};

}  // namespace vfc
