#include <cctype>
#include <regex>

#include <spdlog/spdlog.h>

#include "vfc/pipeline.hpp"
#include "vfc/prompts.hpp"
#include "vfc/util.hpp"

namespace vfc {

std::string_view to_string(Variant v) noexcept {
  return v == Variant::full ? "full" : "no_factcheck";
}

Variant variant_from_string(std::string_view s) {
  if (s == "full") return Variant::full;
  if (s == "no_factcheck") return Variant::no_factcheck;
  fail(ErrorCode::config_error, "unknown variant '" + std::string(s) + "'");
}

namespace {

std::string with_style(std::string prompt, const StyleInstruction& style) {
  if (!style.empty()) prompt += "\n\n" + trim(*style.text);
  return prompt;
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

struct Token {
  std::size_t begin;
  std::size_t end;
  std::string lower;
};

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_char(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_char(text[j])) ++j;
    out.push_back({i, j, to_lower(text.substr(i, j - i))});
    i = j;
  }
  return out;
}

bool token_matches(const std::string& token, const std::string& want) {
  return token == want || singularize(token) == want;
}

/// Index of the first token window matching `phrase`, or npos.
std::size_t find_mention(const std::vector<Token>& tokens, const std::vector<Token>& phrase) {
  if (phrase.empty() || tokens.size() < phrase.size()) return std::string::npos;
  for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; k < phrase.size() && ok; ++k) ok = token_matches(tokens[i + k].lower, phrase[k].lower);
    if (ok) return i;
  }
  return std::string::npos;
}

bool mentions_any(std::string_view text, const std::vector<std::string>& removed) {
  for (const auto& r : removed)
    if (mentions(text, r)) return true;
  return false;
}

bool has_alnum(std::string_view s) {
  for (char c : s)
    if (std::isalnum(static_cast<unsigned char>(c))) return true;
  return false;
}

std::string tidy(std::string s) {
  static const std::regex kSpaces(R"([ \t]+)");
  static const std::regex kSpaceBeforePunct(R"(\s+([.,;:!?]))");
  static const std::regex kDanglingArticle(R"(\b([Aa]|[Aa]n|[Tt]he)\s*([.,;!?]))");
  static const std::regex kRepeatedComma(R"([,;]\s*([,;.!?]))");
  static const std::regex kLeadingPunct(R"(^[\s,;:.!?]+)");
  static const std::regex kDanglingConj(R"(\b(and|or|with)\s*([.,;!?]))");
  s = std::regex_replace(s, kSpaces, " ");
  for (int pass = 0; pass < 3; ++pass) {
    s = std::regex_replace(s, kSpaceBeforePunct, "$1");
    s = std::regex_replace(s, kDanglingArticle, "$2");
    s = std::regex_replace(s, kDanglingConj, "$2");
    s = std::regex_replace(s, kRepeatedComma, "$1");
  }
  s = std::regex_replace(s, kLeadingPunct, "");
  s = trim(s);
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

/// Splits after '.', '!' or '?' followed by whitespace or end of text.
std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if ((c == '.' || c == '!' || c == '?') &&
        (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
      out.push_back(trim(std::string_view(text).substr(start, i + 1 - start)));
      start = i + 1;
    }
  }
  if (start < text.size() && has_alnum(std::string_view(text).substr(start)))
    out.push_back(trim(std::string_view(text).substr(start)));
  return out;
}

std::string scrub_sentence(const std::string& sentence, const std::vector<std::string>& removed) {
  if (!mentions_any(sentence, removed)) return sentence;
  char terminator = '.';
  std::string body = sentence;
  if (!body.empty() && (body.back() == '.' || body.back() == '!' || body.back() == '?')) {
    terminator = body.back();
    body.pop_back();
  }
  std::vector<std::string> clauses;
  std::string cur;
  for (char c : body) {
    if (c == ',' || c == ';') {
      clauses.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  clauses.push_back(cur);
  // the opening clause carries the subject; without it the remainder is not a sentence
  if (mentions_any(clauses.front(), removed)) return {};
  std::vector<std::string> kept;
  for (const auto& c : clauses)
    if (!mentions_any(c, removed) && has_alnum(c)) kept.push_back(trim(c));
  if (kept.empty()) return {};
  return join(kept, ", ") + terminator;
}

std::string delete_words(std::string text, const std::vector<std::string>& removed) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& r : removed) {
      auto phrase = tokenize(r);
      auto tokens = tokenize(text);
      auto at = find_mention(tokens, phrase);
      if (at == std::string::npos) continue;
      text.erase(tokens[at].begin, tokens[at + phrase.size() - 1].end - tokens[at].begin);
      changed = true;
    }
  }
  return tidy(text);
}

}  // namespace

std::string summary_prompt(std::string_view template_id, const Proposals& proposals, const StyleInstruction& style) {
  require(!proposals.empty(), "summarize_proposals: at least one proposal is required");
  std::string prompt = TemplateRegistry::shared().render(template_id, {});
  prompt += "\n";
  for (std::size_t k = 0; k < proposals.size(); ++k)
    prompt += "\nCaption " + std::to_string(k + 1) + ": " + proposals[k].second;
  return with_style(std::move(prompt), style);
}

std::string summarize_proposals(const Gateway& gw, const ModelEndpoint& llm, const Proposals& proposals,
                                const StyleInstruction& style, std::string_view template_id) {
  auto text = gw.complete_chat(llm, {ChatMessage{"user", summary_prompt(template_id, proposals, style), {}}});
  return trim(text);
}

Proposals run_proposal(const Gateway& gw, const ImageRef& image, const std::vector<ModelEndpoint>& captioners,
                       std::vector<std::string>* warnings) {
  require(!captioners.empty(), "run_proposal: at least one captioner is required");
  Proposals out;
  std::vector<std::string> reasons;
  for (const auto& cap : captioners) {
    std::string template_id = cap.prompt_template.empty() ? std::string(tpl::proposal_2d) : cap.prompt_template;
    try {
      auto prompt = TemplateRegistry::shared().render(template_id, {});
      auto text = trim(gw.complete_chat(cap, {ChatMessage{"user", prompt, {image}}}));
      if (text.empty()) fail(ErrorCode::malformed_response, "empty caption");
      out.emplace_back(cap.id, std::move(text));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::image_load_error || e.code() == ErrorCode::unknown_template ||
          e.code() == ErrorCode::precondition)
        throw;
      std::string msg = "captioner '" + cap.id + "' failed: " + e.what();
      reasons.push_back(msg);
      if (warnings) warnings->push_back(msg);
    }
  }
  if (out.empty()) fail(ErrorCode::proposal_failed, "all captioners failed: " + join(reasons, "; "));
  return out;
}

ObjectChecklist build_checklist(const Gateway& gw, const ModelEndpoint& llm, const std::string& summary) {
  require(!trim(summary).empty(), "build_checklist: summary must be non-empty");
  auto prompt = TemplateRegistry::shared().render(tpl::checklist_2d, {summary});
  return parse_object_list(gw.complete_chat(llm, {ChatMessage{"user", prompt, {}}})).value();
}

std::vector<DetectionReport> factcheck_objects(const Gateway& gw, const ModelEndpoint& detector,
                                               const ImageRef& image, const ObjectChecklist& checklist,
                                               double box_threshold, double text_threshold) {
  require(!checklist.empty(), "factcheck_objects: checklist must be non-empty");
  return gw.detect_objects(detector, image, checklist.objects, box_threshold, text_threshold);
}

Expected<Revision> revise_caption(const Gateway& gw, const ModelEndpoint& llm, const std::string& summary,
                                  const std::vector<DetectionReport>& detections, const StyleInstruction& style) {
  auto prompt = with_style(
      TemplateRegistry::shared().render(tpl::caption_2d, {serialize_detections(detections), summary}), style);
  auto parsed = parse_updated_caption(gw.complete_chat(llm, {ChatMessage{"user", prompt, {}}}));
  if (!parsed) return parsed.error();
  return Revision{parsed->modifications, parsed->caption};
}

std::vector<std::string> undetected_objects(const ObjectChecklist& checklist,
                                            const std::vector<DetectionReport>& detections) {
  std::vector<std::string> out;
  for (const auto& obj : checklist.objects) {
    for (const auto& d : detections) {
      if (d.query == obj) {
        if (d.count == 0) out.push_back(obj);
        break;
      }
    }
  }
  return out;
}

bool mentions(std::string_view text, std::string_view phrase) {
  return find_mention(tokenize(text), tokenize(phrase)) != std::string::npos;
}

std::string scrub_objects(const std::string& caption, const std::vector<std::string>& removed) {
  if (!mentions_any(caption, removed)) return caption;
  std::vector<std::string> kept;
  for (const auto& s : split_sentences(caption)) {
    auto scrubbed = scrub_sentence(s, removed);
    if (!scrubbed.empty()) kept.push_back(std::move(scrubbed));
  }
  std::string out = tidy(join(kept, " "));
  if (!has_alnum(out) || mentions_any(out, removed)) out = delete_words(has_alnum(out) ? out : caption, removed);
  return out;
}

Revision revise_caption_fallback(const Gateway& gw, const ModelEndpoint& llm, const std::string& summary,
                                 const ObjectChecklist& checklist, const std::vector<DetectionReport>& detections) {
  auto removed = undetected_objects(checklist, detections);
  if (removed.empty()) return {"", summary};
  Revision out;
  std::string candidate;
  try {
    auto prompt = TemplateRegistry::shared().render(tpl::caption_fallback_2d, {join(removed, ", "), summary});
    auto text = gw.complete_chat(llm, {ChatMessage{"user", prompt, {}}});
    if (auto parsed = parse_updated_caption(text)) {
      out.modifications = parsed->modifications;
      candidate = parsed->caption;
    } else {
      candidate = trim(text);
    }
  } catch (const Error& e) {
    spdlog::warn("fallback revision LLM call failed, scrubbing the summary: {}", e.what());
  }
  if (!has_alnum(candidate)) candidate = summary;
  out.final_caption = scrub_objects(candidate, removed);
  return out;
}

std::string format_qa_pairs(const std::vector<QaPair>& qa_pairs) {
  std::vector<std::string> lines;
  for (const auto& qa : qa_pairs)
    if (qa.answer) lines.push_back("Question: " + qa.question + "\nAnswer: " + *qa.answer);
  return join(lines, "\n");
}

}  // namespace vfc
