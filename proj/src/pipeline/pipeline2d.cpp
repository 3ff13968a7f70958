#include <chrono>

#include <spdlog/spdlog.h>

#include "vfc/pipeline.hpp"
#include "vfc/util.hpp"

namespace vfc {
namespace {

using Clock = std::chrono::steady_clock;

class StepTimer {
 public:
  StepTimer(Timings& out, std::string step) : out_(out), step_(std::move(step)), start_(Clock::now()) {}
  ~StepTimer() {
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start_).count();
    out_.emplace_back(step_, static_cast<long long>(ms));
  }

 private:
  Timings& out_;
  std::string step_;
  Clock::time_point start_;
};

RecordError record_error(const Error& e) {
  return {std::string(to_string(e.code())), e.what()};
}

ordered_json pairs_to_json(const std::vector<std::pair<std::string, std::string>>& pairs) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : pairs) j[k] = v;
  return j;
}

}  // namespace

ordered_json CaptionRecord::to_json(bool with_timings) const {
  ordered_json j;
  j["v"] = 1;
  j["item_id"] = item_id;
  j["image"] = ordered_json(image.to_json());
  j["variant"] = to_string(variant);
  j["proposals"] = pairs_to_json(proposals);
  j["summary"] = summary;
  j["checklist"] = checklist.objects;
  j["detections"] = ordered_json::array();
  for (const auto& d : detections) j["detections"].push_back(d.to_json());
  j["modifications"] = modifications;
  j["final_caption"] = final_caption;
  j["revision_path"] = revision_path;
  j["warnings"] = warnings;
  j["model_versions"] = pairs_to_json(model_versions);
  if (with_timings) {
    ordered_json t = ordered_json::object();
    for (const auto& [k, v] : timings_ms) t[k] = v;
    j["timings_ms"] = t;
  }
  if (error)
    j["error"] = ordered_json{{"code", error->code}, {"message", error->message}};
  else
    j["error"] = nullptr;
  return j;
}

CaptionRecord run_pipeline_2d(const Gateway& gw, const std::string& item_id, const ImageRef& image,
                              const Pipeline2DConfig& config, Variant variant, const StyleInstruction& style) {
  CaptionRecord rec;
  rec.item_id = item_id;
  rec.image = image;
  rec.variant = variant;
  for (const auto& c : config.captioners) rec.model_versions.emplace_back("captioner:" + c.id, c.model_id);
  rec.model_versions.emplace_back("llm", config.llm.model_id);
  if (variant == Variant::full) rec.model_versions.emplace_back("detector", config.detector.model_id);

  Timings timings;
  auto warn = [&](std::string msg) {
    spdlog::warn("[{}] {}", item_id, msg);
    rec.warnings.push_back(std::move(msg));
  };
  auto finish = [&]() -> CaptionRecord {
    if (config.record_timings) rec.timings_ms = timings;
    return rec;
  };

  try {
    gw.load_image(image);  // unreadable images fail before any model call
    {
      StepTimer t(timings, "proposal");
      rec.proposals = run_proposal(gw, image, config.captioners, &rec.warnings);
    }
    {
      StepTimer t(timings, "summary");
      rec.summary = summarize_proposals(gw, config.llm, rec.proposals, style);
    }
  } catch (const Error& e) {
    CaptionRecord bare;
    bare.item_id = item_id;
    bare.image = image;
    bare.variant = variant;
    bare.model_versions = rec.model_versions;
    bare.warnings = rec.warnings;
    bare.error = record_error(e);
    spdlog::error("[{}] {}", item_id, e.what());
    return bare;
  }

  rec.final_caption = rec.summary;
  rec.revision_path = "none";
  if (variant == Variant::no_factcheck) return finish();

  try {
    StepTimer t(timings, "checklist");
    rec.checklist = build_checklist(gw, config.llm, rec.summary);
  } catch (const Error& e) {
    warn(std::string(e.code() == ErrorCode::empty_checklist ? "empty checklist" : "checklist step failed") +
         ", keeping the summary: " + e.what());
    rec.checklist = {};
    return finish();
  }

  try {
    StepTimer t(timings, "detection");
    rec.detections = factcheck_objects(gw, config.detector, image, rec.checklist, config.box_threshold,
                                       config.text_threshold);
  } catch (const Error& e) {
    if (!config.degrade_on_detector_failure) {
      rec.error = record_error(e);
      rec.final_caption.clear();
      spdlog::error("[{}] {}", item_id, e.what());
      return finish();
    }
    warn(std::string("detector failed, degrading to no_factcheck: ") + e.what());
    rec.variant = Variant::no_factcheck;
    rec.checklist = {};
    rec.detections.clear();
    return finish();
  }

  {
    StepTimer t(timings, "revision");
    bool use_fallback = config.llm.weak_instruction_following;
    if (!use_fallback) {
      try {
        auto revised = revise_caption(gw, config.llm, rec.summary, rec.detections, style);
        if (revised) {
          rec.modifications = revised->modifications;
          rec.final_caption = revised->final_caption;
          rec.revision_path = "template";
        } else {
          warn("revision output lacks the updated caption marker, using the fallback");
          use_fallback = true;
        }
      } catch (const Error& e) {
        warn(std::string("revision call failed, using the fallback: ") + e.what());
        use_fallback = true;
      }
    }
    if (use_fallback) {
      auto revised = revise_caption_fallback(gw, config.llm, rec.summary, rec.checklist, rec.detections);
      rec.modifications = revised.modifications;
      rec.final_caption = revised.final_caption;
      rec.revision_path = "fallback";
    }
  }

  auto removed = undetected_objects(rec.checklist, rec.detections);
  if (!removed.empty()) {
    if (!rec.modifications.empty()) rec.modifications += "\n";
    rec.modifications += "Undetected objects: " + join(removed, ", ");
  }
  return finish();
}

}  // namespace vfc
