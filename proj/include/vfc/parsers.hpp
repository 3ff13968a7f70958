#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vfc/expected.hpp"
#include "vfc/types.hpp"

namespace vfc {

/// Ordered, de-duplicated, singular object phrases used as detector queries.
struct ObjectChecklist {
  std::vector<std::string> objects;

  bool empty() const noexcept { return objects.empty(); }
  std::size_t size() const noexcept { return objects.size(); }
  bool operator==(const ObjectChecklist&) const = default;
};

/// Singular form of one lower-case word (suffix rules plus an exception table).
std::string singularize(std::string_view word);
/// Singularizes the head noun of a phrase: the word before " of ", else the last word.
std::string singularize_phrase(std::string_view phrase);

/// Splits an LLM object list on "." (and line breaks), cleans, singularizes, de-duplicates.
/// Error: empty_checklist when nothing survives.
Expected<ObjectChecklist> parse_object_list(std::string_view llm_output);

/// `["object": dog, "number": 2]`, one line per report, input order.
std::string serialize_detections(const std::vector<DetectionReport>& reports);

struct UpdatedCaption {
  std::string modifications;
  std::string caption;
};

/// Caption after the last case-insensitive "Updated caption:" marker.
/// Error: missing_marker when the marker is absent or nothing follows it.
Expected<UpdatedCaption> parse_updated_caption(std::string_view llm_output);

/// First bracketed list of quoted strings, else numbered lines; at most 5.
/// Error: no_questions.
Expected<std::vector<std::string>> parse_question_list(std::string_view llm_output);

enum class Verdict { better, worse };
std::string_view to_string(Verdict v) noexcept;

struct JudgeVerdict {
  int caption_index = 1;
  Verdict verdict = Verdict::worse;
  bool operator==(const JudgeVerdict&) const = default;
};

/// Last "Caption k: Better|Worse" per k in 1..n_captions. Error: incomplete_judgment (index = k).
Expected<std::vector<JudgeVerdict>> parse_judgments_2d(std::string_view judge_output, int n_captions);

enum class CaptionChoice { caption1, caption2 };

/// Last "Better Caption: Caption 1|2". Error: incomplete_judgment.
Expected<CaptionChoice> parse_judgment_3d(std::string_view judge_output);

}  // namespace vfc
