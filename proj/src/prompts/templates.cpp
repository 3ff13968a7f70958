#include <cstdlib>

#include "vfc/error.hpp"
#include "vfc/prompts.hpp"
#include "vfc/util.hpp"

#ifndef VFC_DEFAULT_PROMPTS_DIR
#define VFC_DEFAULT_PROMPTS_DIR "prompts"
#endif

namespace vfc {

int count_slots(std::string_view body) {
  int n = 0;
  for (std::size_t pos = body.find("{}"); pos != std::string_view::npos; pos = body.find("{}", pos + 2)) ++n;
  return n;
}

TemplateRegistry TemplateRegistry::load(const std::filesystem::path& root) {
  TemplateRegistry reg;
  reg.root_ = root;
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec))
    fail(ErrorCode::config_error, "prompt directory not found: " + root.string());
  for (const char* group : {"2d", "3d", "judge"}) {
    auto dir = root / group;
    if (!std::filesystem::is_directory(dir, ec)) continue;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
      PromptTemplate t;
      t.id = std::string(group) + "." + entry.path().stem().string();
      t.body = read_file(entry.path());
      t.slot_count = count_slots(t.body);
      t.sha256 = sha256_hex(t.body);
      reg.templates_.emplace(t.id, std::move(t));
    }
  }
  if (reg.templates_.empty()) fail(ErrorCode::config_error, "no prompt templates under " + root.string());
  return reg;
}

const TemplateRegistry& TemplateRegistry::shared() {
  static const TemplateRegistry registry = [] {
    const char* env = std::getenv("VFC_PROMPTS_DIR");
    return load(env && *env ? std::filesystem::path(env) : std::filesystem::path(VFC_DEFAULT_PROMPTS_DIR));
  }();
  return registry;
}

const PromptTemplate& TemplateRegistry::get(std::string_view id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) fail(ErrorCode::unknown_template, "unknown prompt template '" + std::string(id) + "'");
  return it->second;
}

bool TemplateRegistry::contains(std::string_view id) const { return templates_.find(id) != templates_.end(); }

std::string TemplateRegistry::render(std::string_view id, const std::vector<std::string>& slots) const {
  const auto& t = get(id);
  if (static_cast<int>(slots.size()) != t.slot_count)
    fail(ErrorCode::slot_arity, "template '" + t.id + "' takes " + std::to_string(t.slot_count) + " slots, got " +
                                    std::to_string(slots.size()));
  std::string out;
  out.reserve(t.body.size() + 256);
  std::size_t next = 0;
  std::size_t slot = 0;
  for (std::size_t pos = t.body.find("{}"); pos != std::string::npos; pos = t.body.find("{}", next)) {
    out.append(t.body, next, pos - next);
    out += slots[slot++];
    next = pos + 2;
  }
  out.append(t.body, next, std::string::npos);
  return out;
}

std::vector<std::string> TemplateRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : templates_) out.push_back(id);
  return out;
}

std::string TemplateRegistry::checksum() const {
  std::string acc;
  for (const auto& [id, t] : templates_) acc += id + ":" + t.sha256 + "\n";
  return sha256_hex(acc);
}

std::string render_prompt(std::string_view template_id, const std::vector<std::string>& slots) {
  return TemplateRegistry::shared().render(template_id, slots);
}

}  // namespace vfc
