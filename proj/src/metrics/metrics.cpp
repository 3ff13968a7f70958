#include <algorithm>
#include <cctype>
#include <cmath>

#include <spdlog/spdlog.h>

#include "vfc/metrics.hpp"
#include "vfc/prompts.hpp"
#include "vfc/util.hpp"

namespace vfc {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    fail(ErrorCode::dimension_error,
         "cosine: dimensions differ (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  auto sums = [&](double sa, double sb, double& dot, double& na, double& nb) {
    dot = na = nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      double x = a[i] * sa, y = b[i] * sb;
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
  };
  double dot, na, nb;
  sums(1.0, 1.0, dot, na, nb);
  if (!std::isfinite(dot) || !std::isfinite(na) || !std::isfinite(nb)) {
    // squares overflowed: cosine is scale invariant, so divide each vector by its largest entry
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ma = std::max(ma, std::fabs(a[i]));
      mb = std::max(mb, std::fabs(b[i]));
    }
    if (!std::isfinite(ma) || !std::isfinite(mb)) fail(ErrorCode::degenerate_vector, "cosine: non-finite entry");
    sums(1.0 / ma, 1.0 / mb, dot, na, nb);
  }
  if (!(na > 0) || !(nb > 0)) fail(ErrorCode::degenerate_vector, "cosine: zero-norm vector");
  // sqrt(na * nb) keeps cosine(a, a) at exactly 1 (sqrt(fl(x*x)) == x); the split form is
  // only needed when the product leaves the finite range.
  const double prod = na * nb;
  double c = (std::isfinite(prod) && prod > 0) ? dot / std::sqrt(prod) : dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) { return cosine(a.values, b.values); }

std::string_view to_string(ClipScoreMode m) noexcept {
  return m == ClipScoreMode::cosine100 ? "cosine100" : "ref25";
}

ClipScoreMode clip_score_mode_from_string(std::string_view s) {
  if (s == "cosine100") return ClipScoreMode::cosine100;
  if (s == "ref25") return ClipScoreMode::ref25;
  fail(ErrorCode::config_error, "unknown clip_score_mode '" + std::string(s) + "'");
}

double scale_clip_score(double cos, ClipScoreMode mode) {
  if (mode == ClipScoreMode::cosine100) return 100.0 * cos;
  return 100.0 * 2.5 * std::max(cos, 0.0);
}

std::size_t estimate_tokens(std::string_view text) {
  std::size_t n = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (std::isalnum(c) || c >= 0x80) {
      while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) ||
                                 static_cast<unsigned char>(text[i]) >= 0x80))
        ++i;
      ++n;
    } else {
      ++i;
      ++n;
    }
  }
  return n;
}

double clip_score(const Gateway& gw, const ModelEndpoint& embedder, const ImageRef& image,
                  const std::string& caption, ClipScoreMode mode, std::size_t token_warn_threshold) {
  require(!trim(caption).empty(), "clip_score: caption must be non-empty");
  auto tokens = estimate_tokens(caption);
  if (token_warn_threshold > 0 && tokens > token_warn_threshold)
    spdlog::warn("caption for '{}' has ~{} tokens (> {}); the text encoder will likely truncate it", image.id,
                 tokens, token_warn_threshold);
  auto iv = gw.embed_image(embedder, image);
  auto tv = gw.embed_text(embedder, caption);
  return scale_clip_score(cosine(iv, tv), mode);
}

std::int64_t reconstruction_seed(const std::string& item_id, const std::string& method_id) {
  auto digest = sha256_hex(item_id + "|" + method_id);
  return static_cast<std::int64_t>(std::stoull(digest.substr(0, 8), nullptr, 16) & 0x7fffffffULL);
}

ClipImageResult clip_image_score(const Gateway& gw, const ModelEndpoint& embedder, const ModelEndpoint& image_gen,
                                 const ImageRef& original, const std::string& caption, std::int64_t seed) {
  require(!trim(caption).empty(), "clip_image_score: caption must be non-empty");
  ClipImageResult out;
  out.seed = seed;
  try {
    auto reconstructed = gw.generate_image(image_gen, caption, seed);
    out.score = 100.0 * cosine(gw.embed_image(embedder, original), gw.embed_image(embedder, reconstructed));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::generation_refused) throw;
    out.error = std::string(to_string(e.code())) + ": " + e.what();
  }
  return out;
}

ClipImageResult clip_image_score(const Gateway& gw, const ModelEndpoint& embedder, const ModelEndpoint& view3d_gen,
                                 const ObjectViews& original, const std::string& caption, std::int64_t seed) {
  require(!trim(caption).empty(), "clip_image_score: caption must be non-empty");
  require(!original.views.empty(), "clip_image_score: object has no views");
  ClipImageResult out;
  out.seed = seed;
  std::vector<ViewAngle> angles;
  for (const auto& v : original.views) angles.push_back(v.angle);
  try {
    auto generated = gw.generate_views3d(view3d_gen, caption, angles, seed);
    for (std::size_t k = 0; k < angles.size(); ++k)
      out.per_view.push_back(
          100.0 * cosine(gw.embed_image(embedder, original.views[k].image), gw.embed_image(embedder, generated[k])));
    out.score = compensated_mean(out.per_view);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::generation_refused) throw;
    out.error = std::string(to_string(e.code())) + ": " + e.what();
    out.per_view.clear();
  }
  return out;
}

WinRateResult winning_rate(const std::vector<double>& ours, const std::vector<double>& baseline) {
  if (ours.size() != baseline.size())
    fail(ErrorCode::alignment_error, "winning_rate: " + std::to_string(ours.size()) + " vs " +
                                         std::to_string(baseline.size()) + " scores");
  if (ours.empty()) fail(ErrorCode::alignment_error, "winning_rate: no aligned items");
  WinRateResult r;
  r.n = static_cast<int>(ours.size());
  for (std::size_t i = 0; i < ours.size(); ++i) {
    if (ours[i] > baseline[i])
      ++r.wins;
    else if (ours[i] < baseline[i])
      ++r.losses;
    else
      ++r.ties;
  }
  r.rate = (r.wins + 0.5 * r.ties) / r.n;
  return r;
}

Pick aggregate_majority(const std::vector<Pick>& votes, int group_size) {
  if (group_size <= 0 || group_size % 2 == 0)
    fail(ErrorCode::config_error, "majority group size must be odd, got " + std::to_string(group_size));
  require(static_cast<int>(votes.size()) == group_size,
          "aggregate_majority: expected " + std::to_string(group_size) + " votes, got " + std::to_string(votes.size()));
  auto a = std::count(votes.begin(), votes.end(), Pick::a);
  return 2 * a > group_size ? Pick::a : Pick::b;
}

// ---------------------------------------------------------------------------
// judging

namespace {

constexpr std::string_view kRetrySalt = "judge-retry-1";

ordered_json opt_double(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(); }

}  // namespace

Judgment judge_2d(const Gateway& gw, const ModelEndpoint& llm, const ImageRef& image, const std::string& reference,
                  const std::vector<std::string>& candidates) {
  require(!candidates.empty() && candidates.size() <= 4, "judge_2d: 1..4 candidates required");
  require(!trim(reference).empty(), "judge_2d: reference caption must be non-empty");
  std::vector<std::string> slots{reference};
  for (std::size_t k = 0; k < 4; ++k) slots.push_back(k < candidates.size() ? candidates[k] : "N/A");
  auto prompt = TemplateRegistry::shared().render(tpl::judge_2d, slots);

  Judgment j;
  j.item_id = image.id;
  j.judge_id = llm.id;
  j.kind = "2d";
  int n = static_cast<int>(candidates.size());
  for (int attempt = 0; attempt < 2 && !j.judged; ++attempt) {
    auto raw = gw.complete_chat(llm, {ChatMessage{"user", prompt, {image}}}, attempt == 0 ? "" : kRetrySalt);
    j.raw_responses.push_back(raw);
    auto parsed = parse_judgments_2d(raw, n);
    if (parsed) {
      j.verdicts = *parsed;
      j.judged = true;
      j.error.reset();
    } else {
      j.error = std::string(to_string(parsed.error().code)) + "(" + std::to_string(parsed.error().index) + ")";
      spdlog::warn("[{}] judge output incomplete (attempt {}): {}", image.id, attempt + 1, parsed.error().message);
    }
  }
  return j;
}

Judgment judge_3d(const Gateway& gw, const ModelEndpoint& llm, const std::vector<ImageRef>& views,
                  const std::string& caption1, const std::string& caption2) {
  require(!trim(caption1).empty() && !trim(caption2).empty(), "judge_3d: both captions must be non-empty");
  auto prompt = TemplateRegistry::shared().render(tpl::judge_3d, {caption1, caption2});
  Judgment j;
  j.item_id = views.empty() ? std::string() : views.front().id;
  j.judge_id = llm.id;
  j.kind = "3d";
  for (int attempt = 0; attempt < 2 && !j.judged; ++attempt) {
    auto raw = gw.complete_chat(llm, {ChatMessage{"user", prompt, views}}, attempt == 0 ? "" : kRetrySalt);
    j.raw_responses.push_back(raw);
    auto parsed = parse_judgment_3d(raw);
    if (parsed) {
      j.choice = *parsed;
      j.judged = true;
      j.error.reset();
    } else {
      j.error = std::string(to_string(parsed.error().code));
      spdlog::warn("judge output lacks a verdict (attempt {})", attempt + 1);
    }
  }
  return j;
}

ordered_json Judgment::to_json() const {
  ordered_json j;
  j["item_id"] = item_id;
  j["judge_id"] = judge_id;
  j["kind"] = kind;
  if (kind == "2d") j["reference_method"] = reference_method;
  j["candidate_methods"] = candidate_methods;
  j["judged"] = judged;
  if (kind == "2d") {
    j["verdicts"] = ordered_json::array();
    for (const auto& v : verdicts)
      j["verdicts"].push_back(ordered_json{{"caption", v.caption_index}, {"verdict", to_string(v.verdict)}});
  } else {
    j["choice"] = choice ? ordered_json(*choice == CaptionChoice::caption1 ? 1 : 2) : ordered_json();
  }
  j["raw_responses"] = raw_responses;
  j["error"] = error ? ordered_json(*error) : ordered_json();
  return j;
}

Judgment Judgment::from_json(const json& j) {
  try {
    Judgment out;
    out.item_id = j.at("item_id").get<std::string>();
    out.judge_id = j.value("judge_id", "");
    out.kind = j.value("kind", "2d");
    out.reference_method = j.value("reference_method", "");
    out.candidate_methods = j.value("candidate_methods", std::vector<std::string>{});
    out.judged = j.value("judged", false);
    if (j.contains("verdicts"))
      for (const auto& v : j["verdicts"])
        out.verdicts.push_back({v.at("caption").get<int>(),
                                v.at("verdict").get<std::string>() == "Better" ? Verdict::better : Verdict::worse});
    if (j.contains("choice") && !j["choice"].is_null())
      out.choice = j["choice"].get<int>() == 1 ? CaptionChoice::caption1 : CaptionChoice::caption2;
    out.raw_responses = j.value("raw_responses", std::vector<std::string>{});
    if (j.contains("error") && j["error"].is_string()) out.error = j["error"].get<std::string>();
    return out;
  } catch (const json::exception& e) {
    fail(ErrorCode::schema_error, std::string("judgment row: ") + e.what());
  }
}

ordered_json ScoreRow::to_json() const {
  ordered_json j;
  j["item_id"] = item_id;
  j["method_id"] = method_id;
  j["clip_score"] = opt_double(clip_score);
  j["clip_image_score"] = opt_double(clip_image_score);
  j["seed"] = seed ? ordered_json(*seed) : ordered_json();
  j["error"] = error ? ordered_json(*error) : ordered_json();
  return j;
}

ScoreRow ScoreRow::from_json(const json& j) {
  try {
    ScoreRow r;
    r.item_id = j.at("item_id").get<std::string>();
    r.method_id = j.at("method_id").get<std::string>();
    auto num = [&](const char* k) -> std::optional<double> {
      if (!j.contains(k) || j[k].is_null()) return std::nullopt;
      return j[k].get<double>();
    };
    r.clip_score = num("clip_score");
    r.clip_image_score = num("clip_image_score");
    if (j.contains("seed") && !j["seed"].is_null()) r.seed = j["seed"].get<std::int64_t>();
    if (j.contains("error") && j["error"].is_string()) r.error = j["error"].get<std::string>();
    // ref25 scores reach 250, so only clip_image_score is held to [-100, 100]
    if (r.clip_score && (!std::isfinite(*r.clip_score) || *r.clip_score < -100.0 || *r.clip_score > 250.0))
      fail(ErrorCode::schema_error, "clip_score out of range for item '" + r.item_id + "'");
    if (r.clip_image_score &&
        (!std::isfinite(*r.clip_image_score) || *r.clip_image_score < -100.0 || *r.clip_image_score > 100.0))
      fail(ErrorCode::schema_error, "clip_image_score out of [-100, 100] for item '" + r.item_id + "'");
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::schema_error, std::string("score row: ") + e.what());
  }
}

}  // namespace vfc
