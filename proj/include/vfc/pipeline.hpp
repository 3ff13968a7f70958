#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vfc/gateway.hpp"
#include "vfc/parsers.hpp"
#include "vfc/types.hpp"

namespace vfc {

enum class Variant { full, no_factcheck };
std::string_view to_string(Variant v) noexcept;
/// Accepts "full" and "no_factcheck". Throws Error(config_error).
Variant variant_from_string(std::string_view s);

/// Optional free-form instruction appended to the summarization and captioning prompts.
struct StyleInstruction {
  std::optional<std::string> text;
  bool empty() const { return !text || text->empty(); }
};

using Proposals = std::vector<std::pair<std::string, std::string>>;  // captioner id -> caption
using Timings = std::vector<std::pair<std::string, long long>>;       // step -> ms, step order

struct RecordError {
  std::string code;
  std::string message;
};

// ---------------------------------------------------------------------------
// 2D

struct Pipeline2DConfig {
  std::vector<ModelEndpoint> captioners;
  ModelEndpoint llm;
  ModelEndpoint detector;
  double box_threshold = 0.35;
  double text_threshold = 0.25;
  bool degrade_on_detector_failure = false;
  bool record_timings = true;
};

/// One image's full pipeline trace.
struct CaptionRecord {
  std::string item_id;
  ImageRef image;
  Variant variant = Variant::full;
  Proposals proposals;
  std::string summary;
  ObjectChecklist checklist;
  std::vector<DetectionReport> detections;
  std::string modifications;
  std::string final_caption;
  std::string revision_path;  // "template", "fallback", or "none"
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, std::string>> model_versions;
  Timings timings_ms;
  std::optional<RecordError> error;

  bool failed() const noexcept { return error.has_value(); }
  /// Stable field order, schema version "v": 1.
  ordered_json to_json(bool with_timings = true) const;
};

struct Revision {
  std::string modifications;
  std::string final_caption;
};

/// Throws Error(proposal_failed) when every captioner fails; per-captioner failures go to `warnings`.
Proposals run_proposal(const Gateway& gw, const ImageRef& image, const std::vector<ModelEndpoint>& captioners,
                       std::vector<std::string>* warnings = nullptr);

/// Renders the summarization template, appends "Caption k: ..." per proposal and the style.
std::string summary_prompt(std::string_view template_id, const Proposals& proposals, const StyleInstruction& style);

std::string summarize_proposals(const Gateway& gw, const ModelEndpoint& llm, const Proposals& proposals,
                                const StyleInstruction& style, std::string_view template_id = "2d.verify.step1");

/// Throws Error(empty_checklist).
ObjectChecklist build_checklist(const Gateway& gw, const ModelEndpoint& llm, const std::string& summary);

std::vector<DetectionReport> factcheck_objects(const Gateway& gw, const ModelEndpoint& detector,
                                               const ImageRef& image, const ObjectChecklist& checklist,
                                               double box_threshold = 0.35, double text_threshold = 0.25);

/// Template-driven revision. Error missing_marker means the caller should use the fallback.
Expected<Revision> revise_caption(const Gateway& gw, const ModelEndpoint& llm, const std::string& summary,
                                  const std::vector<DetectionReport>& detections,
                                  const StyleInstruction& style = {});

/// Checklist entries whose detection count is zero, in checklist order.
std::vector<std::string> undetected_objects(const ObjectChecklist& checklist,
                                            const std::vector<DetectionReport>& detections);

/// True when `phrase` occurs in `text` on word boundaries, case-insensitively.
bool mentions(std::string_view text, std::string_view phrase);

/// Deletes every clause (then sentence, then bare word) mentioning a removed object.
/// Postcondition: mentions(result, r) is false for every r in `removed`.
std::string scrub_objects(const std::string& caption, const std::vector<std::string>& removed);

/// Deterministic removal set, LLM asked only to remove it, then mechanical enforcement.
Revision revise_caption_fallback(const Gateway& gw, const ModelEndpoint& llm, const std::string& summary,
                                 const ObjectChecklist& checklist, const std::vector<DetectionReport>& detections);

CaptionRecord run_pipeline_2d(const Gateway& gw, const std::string& item_id, const ImageRef& image,
                              const Pipeline2DConfig& config, Variant variant, const StyleInstruction& style);

// ---------------------------------------------------------------------------
// 3D

struct ObjectView {
  std::string view_id;
  ImageRef image;
  ViewAngle angle;
};

struct ObjectViews {
  std::string object_id;
  std::vector<ObjectView> views;
};

struct QaPair {
  std::string question;
  std::optional<std::string> answer;  // nullopt when the VQA call failed
};

struct ViewCaptionRecord {
  std::string view_id;
  ImageRef image;
  ViewAngle angle;
  Proposals proposals;
  std::string summary;
  std::vector<std::string> questions;
  std::vector<QaPair> vqa_answers;
  std::string revised_caption;
  std::vector<std::string> warnings;
  std::optional<RecordError> error;

  ordered_json to_json() const;
};

struct Object3DCaptionRecord {
  std::string object_id;
  Variant variant = Variant::full;
  std::vector<ViewCaptionRecord> view_records;
  std::string fused_caption;
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, std::string>> model_versions;
  Timings timings_ms;
  std::optional<RecordError> error;

  bool failed() const noexcept { return error.has_value(); }
  ordered_json to_json(bool with_timings = true) const;
};

struct Pipeline3DConfig {
  std::vector<ModelEndpoint> captioners;  // each carries its proposal template id
  ModelEndpoint llm;
  ModelEndpoint vqa;
  bool parallel_views = true;
  bool record_timings = true;
};

struct ViewSummary {
  Proposals proposals;
  std::string summary;
};

ViewSummary run_view(const Gateway& gw, const ImageRef& view, const std::vector<ModelEndpoint>& captioners,
                     const ModelEndpoint& llm, std::vector<std::string>* warnings = nullptr);

/// Error no_questions when the LLM output yields none.
Expected<std::vector<std::string>> generate_questions(const Gateway& gw, const ModelEndpoint& llm,
                                                      const std::string& summary);

/// Throws Error(vqa_failed) when every answer is null.
std::vector<QaPair> vqa_check(const Gateway& gw, const ModelEndpoint& vqa, const ImageRef& view,
                              const std::vector<std::string>& questions);

std::string format_qa_pairs(const std::vector<QaPair>& qa_pairs);

std::string revise_view(const Gateway& gw, const ModelEndpoint& llm, const std::string& summary,
                        const std::vector<QaPair>& qa_pairs);

std::string fusion_prompt(const std::vector<std::string>& view_captions);
std::string fuse_views(const Gateway& gw, const ModelEndpoint& llm, const std::vector<std::string>& view_captions);

Object3DCaptionRecord run_pipeline_3d(const Gateway& gw, const ObjectViews& obj, const Pipeline3DConfig& config,
                                      Variant variant);

}  // namespace vfc
