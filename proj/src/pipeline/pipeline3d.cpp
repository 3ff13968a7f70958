#include <chrono>
#include <future>

#include <spdlog/spdlog.h>

#include "vfc/pipeline.hpp"
#include "vfc/prompts.hpp"
#include "vfc/util.hpp"

namespace vfc {
namespace {

RecordError record_error(const Error& e) {
  return {std::string(to_string(e.code())), e.what()};
}

ordered_json pairs_to_json(const std::vector<std::pair<std::string, std::string>>& pairs) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : pairs) j[k] = v;
  return j;
}

ordered_json error_json(const std::optional<RecordError>& e) {
  if (!e) return nullptr;
  return ordered_json{{"code", e->code}, {"message", e->message}};
}

ViewCaptionRecord process_view(const Gateway& gw, const ObjectView& view, const Pipeline3DConfig& config,
                               Variant variant) {
  ViewCaptionRecord rec;
  rec.view_id = view.view_id;
  rec.image = view.image;
  rec.angle = view.angle;
  try {
    gw.load_image(view.image);
    auto vs = run_view(gw, view.image, config.captioners, config.llm, &rec.warnings);
    rec.proposals = std::move(vs.proposals);
    rec.summary = std::move(vs.summary);
    rec.revised_caption = rec.summary;
    if (variant == Variant::no_factcheck) return rec;

    auto questions = generate_questions(gw, config.llm, rec.summary);
    if (!questions) {
      rec.warnings.push_back("no questions parsed, verification skipped: " + questions.error().message);
      spdlog::warn("[{}] {}", view.view_id, rec.warnings.back());
      return rec;
    }
    rec.questions = *questions;
    rec.vqa_answers = vqa_check(gw, config.vqa, view.image, rec.questions);
    std::size_t nulls = 0;
    for (const auto& qa : rec.vqa_answers)
      if (!qa.answer) ++nulls;
    if (nulls > 0) rec.warnings.push_back(std::to_string(nulls) + " VQA answer(s) missing");
    rec.revised_caption = revise_view(gw, config.llm, rec.summary, rec.vqa_answers);
  } catch (const Error& e) {
    rec.error = record_error(e);
    rec.revised_caption.clear();
    spdlog::error("[{}] {}", view.view_id, e.what());
  }
  return rec;
}

}  // namespace

ViewSummary run_view(const Gateway& gw, const ImageRef& view, const std::vector<ModelEndpoint>& captioners,
                     const ModelEndpoint& llm, std::vector<std::string>* warnings) {
  std::vector<ModelEndpoint> caps = captioners;
  for (auto& c : caps)
    if (c.prompt_template.empty()) c.prompt_template = std::string(tpl::proposal_3d_llava);
  ViewSummary out;
  out.proposals = run_proposal(gw, view, caps, warnings);
  out.summary = summarize_proposals(gw, llm, out.proposals, {}, tpl::summarize_3d);
  return out;
}

Expected<std::vector<std::string>> generate_questions(const Gateway& gw, const ModelEndpoint& llm,
                                                      const std::string& summary) {
  require(!trim(summary).empty(), "generate_questions: summary must be non-empty");
  auto prompt = TemplateRegistry::shared().render(tpl::questions_3d, {summary});
  return parse_question_list(gw.complete_chat(llm, {ChatMessage{"user", prompt, {}}}));
}

std::vector<QaPair> vqa_check(const Gateway& gw, const ModelEndpoint& vqa, const ImageRef& view,
                              const std::vector<std::string>& questions) {
  require(!questions.empty(), "vqa_check: questions must be non-empty");
  std::vector<QaPair> out;
  std::size_t answered = 0;
  std::string last_error;
  for (const auto& q : questions) {
    QaPair qa{q, std::nullopt};
    try {
      qa.answer = trim(gw.complete_chat(vqa, {ChatMessage{"user", q, {view}}}));
      ++answered;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::precondition) throw;
      last_error = e.what();
      spdlog::warn("VQA failed for '{}': {}", q, e.what());
    }
    out.push_back(std::move(qa));
  }
  if (answered == 0) fail(ErrorCode::vqa_failed, "every VQA call failed: " + last_error);
  return out;
}

std::string revise_view(const Gateway& gw, const ModelEndpoint& llm, const std::string& summary,
                        const std::vector<QaPair>& qa_pairs) {
  auto qa = format_qa_pairs(qa_pairs);
  if (qa.empty()) return summary;
  auto prompt = TemplateRegistry::shared().render(tpl::caption_view_3d, {summary, qa});
  return trim(gw.complete_chat(llm, {ChatMessage{"user", prompt, {}}}));
}

std::string fusion_prompt(const std::vector<std::string>& view_captions) {
  require(!view_captions.empty(), "fuse_views: at least one view caption is required");
  const auto& reg = TemplateRegistry::shared();
  if (view_captions.size() == 2) return reg.render(tpl::caption_object_3d, view_captions);
  // same header, one "Camera View k description:" line per view
  const auto& body = reg.get(tpl::caption_object_3d).body;
  auto pos = body.find("Camera View 1 description: {}");
  if (pos == std::string::npos) fail(ErrorCode::unknown_template, "object caption template lacks view lines");
  std::string prompt = body.substr(0, pos);
  for (std::size_t k = 0; k < view_captions.size(); ++k) {
    if (k > 0) prompt += "\n";
    prompt += "Camera View " + std::to_string(k + 1) + " description: " + view_captions[k];
  }
  return prompt;
}

std::string fuse_views(const Gateway& gw, const ModelEndpoint& llm, const std::vector<std::string>& view_captions) {
  require(!view_captions.empty(), "fuse_views: at least one view caption is required");
  if (view_captions.size() == 1) return view_captions.front();
  return trim(gw.complete_chat(llm, {ChatMessage{"user", fusion_prompt(view_captions), {}}}));
}

ordered_json ViewCaptionRecord::to_json() const {
  ordered_json j;
  j["view_id"] = view_id;
  j["image"] = ordered_json(image.to_json());
  j["azimuth_deg"] = angle.azimuth_deg;
  j["elevation_deg"] = angle.elevation_deg;
  j["proposals"] = pairs_to_json(proposals);
  j["summary"] = summary;
  j["questions"] = questions;
  j["vqa_answers"] = ordered_json::array();
  for (const auto& qa : vqa_answers)
    j["vqa_answers"].push_back(ordered_json{{"question", qa.question},
                                            {"answer", qa.answer ? ordered_json(*qa.answer) : ordered_json()}});
  j["revised_caption"] = revised_caption;
  j["warnings"] = warnings;
  j["error"] = error_json(error);
  return j;
}

ordered_json Object3DCaptionRecord::to_json(bool with_timings) const {
  ordered_json j;
  j["v"] = 1;
  j["object_id"] = object_id;
  j["variant"] = to_string(variant);
  j["view_records"] = ordered_json::array();
  for (const auto& v : view_records) j["view_records"].push_back(v.to_json());
  j["fused_caption"] = fused_caption;
  j["warnings"] = warnings;
  j["model_versions"] = pairs_to_json(model_versions);
  if (with_timings) {
    ordered_json t = ordered_json::object();
    for (const auto& [k, v] : timings_ms) t[k] = v;
    j["timings_ms"] = t;
  }
  j["error"] = error_json(error);
  return j;
}

Object3DCaptionRecord run_pipeline_3d(const Gateway& gw, const ObjectViews& obj, const Pipeline3DConfig& config,
                                      Variant variant) {
  require(!obj.views.empty(), "run_pipeline_3d: object '" + obj.object_id + "' has no views");
  Object3DCaptionRecord rec;
  rec.object_id = obj.object_id;
  rec.variant = variant;
  for (const auto& c : config.captioners) rec.model_versions.emplace_back("captioner:" + c.id, c.model_id);
  rec.model_versions.emplace_back("llm", config.llm.model_id);
  if (variant == Variant::full) rec.model_versions.emplace_back("vqa", config.vqa.model_id);

  using Clock = std::chrono::steady_clock;
  auto ms_since = [](Clock::time_point t0) {
    return static_cast<long long>(std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count());
  };

  auto t0 = Clock::now();
  if (config.parallel_views && obj.views.size() > 1) {
    std::vector<std::future<ViewCaptionRecord>> futures;
    for (const auto& v : obj.views)
      futures.push_back(std::async(std::launch::async, process_view, std::cref(gw), std::cref(v),
                                   std::cref(config), variant));
    for (auto& f : futures) rec.view_records.push_back(f.get());
  } else {
    for (const auto& v : obj.views) rec.view_records.push_back(process_view(gw, v, config, variant));
  }
  if (config.record_timings) rec.timings_ms.emplace_back("views", ms_since(t0));

  std::vector<std::string> captions;
  for (const auto& v : rec.view_records) {
    if (v.error) {
      rec.warnings.push_back("view '" + v.view_id + "' dropped from fusion: " + v.error->message);
      continue;
    }
    captions.push_back(v.revised_caption);
  }
  if (captions.empty()) {
    rec.error = RecordError{std::string(to_string(ErrorCode::pipeline_failed)), "every view failed"};
    spdlog::error("[{}] every view failed", obj.object_id);
    return rec;
  }

  auto t1 = Clock::now();
  try {
    rec.fused_caption = fuse_views(gw, config.llm, captions);
  } catch (const Error& e) {
    rec.error = record_error(e);
    spdlog::error("[{}] fusion failed: {}", obj.object_id, e.what());
  }
  if (config.record_timings) rec.timings_ms.emplace_back("fusion", ms_since(t1));
  return rec;
}

}  // namespace vfc
