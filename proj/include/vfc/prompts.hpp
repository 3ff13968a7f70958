#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace vfc {

/// Template ids. Each maps to `<prompts dir>/<group>/<name>.txt`, id = "<group>.<name>".
namespace tpl {
inline constexpr std::string_view proposal_2d = "2d.proposal";
inline constexpr std::string_view summarize_2d = "2d.verify.step1";
inline constexpr std::string_view checklist_2d = "2d.verify.step2";
inline constexpr std::string_view caption_2d = "2d.caption";
inline constexpr std::string_view caption_fallback_2d = "2d.caption.fallback";
inline constexpr std::string_view proposal_3d_llava = "3d.proposal.llava";
inline constexpr std::string_view proposal_3d_instructblip = "3d.proposal.instructblip";
inline constexpr std::string_view summarize_3d = "3d.verify.step1";
inline constexpr std::string_view questions_3d = "3d.verify.step2";
inline constexpr std::string_view caption_view_3d = "3d.caption.view";
inline constexpr std::string_view caption_object_3d = "3d.caption.object";
inline constexpr std::string_view judge_2d = "judge.2d";
inline constexpr std::string_view judge_3d = "judge.3d";
}  // namespace tpl

struct PromptTemplate {
  std::string id;
  std::string body;  // `{}` marks a slot
  int slot_count = 0;
  std::string sha256;
};

/// Immutable set of prompt templates loaded from text assets.
class TemplateRegistry {
 public:
  /// Loads every `*.txt` under `root/{2d,3d,judge}`. Throws Error(config_error) when the
  /// directory is missing or empty.
  static TemplateRegistry load(const std::filesystem::path& root);

  /// Registry from $VFC_PROMPTS_DIR, else the directory configured at build time.
  static const TemplateRegistry& shared();

  /// Throws Error(unknown_template).
  const PromptTemplate& get(std::string_view id) const;
  bool contains(std::string_view id) const;

  /// Substitutes `slots` in order. Throws Error(unknown_template) or Error(slot_arity).
  std::string render(std::string_view id, const std::vector<std::string>& slots) const;

  std::vector<std::string> ids() const;
  /// Digest over all (id, sha256) pairs; changes whenever any template changes.
  std::string checksum() const;
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

int count_slots(std::string_view body);

/// render via TemplateRegistry::shared().
std::string render_prompt(std::string_view template_id, const std::vector<std::string>& slots);

}  // namespace vfc
