#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <regex>

#include "vfc/parsers.hpp"
#include "vfc/util.hpp"

namespace vfc {
namespace {

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::string clean_entry(std::string raw) {
  auto colon = raw.rfind(':');
  if (colon != std::string::npos) raw = raw.substr(colon + 1);
  std::string s = trim(raw);
  static constexpr std::string_view kEdge = "-*•\"'`,;()[] \t";
  while (!s.empty() && kEdge.find(s.front()) != std::string_view::npos) s.erase(s.begin());
  while (!s.empty() && kEdge.find(s.back()) != std::string_view::npos) s.pop_back();
  // leading enumeration such as "1)" left over after splitting on '.'
  static const std::regex kEnum(R"(^\d+[\)\]]\s*)");
  s = std::regex_replace(s, kEnum, "");
  // collapse inner whitespace
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += c;
  }
  return to_lower(out);
}

/// Last regex match in `text`, or nullopt.
std::optional<std::smatch> last_match(const std::string& text, const std::regex& re) {
  std::optional<std::smatch> last;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) last = *it;
  return last;
}

/// Parses a Python-style list of quoted strings starting at text[pos] == '['.
std::optional<std::vector<std::string>> parse_string_list(const std::string& text, std::size_t pos) {
  std::vector<std::string> items;
  std::size_t i = pos + 1;
  auto skip_ws = [&] {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  skip_ws();
  if (i < text.size() && text[i] == ']') return std::nullopt;
  while (i < text.size()) {
    skip_ws();
    if (i >= text.size()) return std::nullopt;
    char quote = text[i];
    if (quote != '"' && quote != '\'') return std::nullopt;
    ++i;
    std::string item;
    bool closed = false;
    while (i < text.size()) {
      char c = text[i++];
      if (c == '\\' && i < text.size()) {
        item += text[i++];
      } else if (c == quote) {
        closed = true;
        break;
      } else {
        item += c;
      }
    }
    if (!closed) return std::nullopt;
    items.push_back(std::move(item));
    skip_ws();
    if (i < text.size() && text[i] == ',') {
      ++i;
      skip_ws();
      if (i < text.size() && text[i] == ']') return items;  // trailing comma
      continue;
    }
    if (i < text.size() && text[i] == ']') return items;
    return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Verdict v) noexcept { return v == Verdict::better ? "Better" : "Worse"; }

Expected<ObjectChecklist> parse_object_list(std::string_view llm_output) {
  ObjectChecklist list;
  std::string text(llm_output);
  std::replace(text.begin(), text.end(), '\n', '.');
  for (auto& raw : split(text, '.')) {
    auto entry = clean_entry(raw);
    if (entry.empty() || all_digits(entry)) continue;
    entry = singularize_phrase(entry);
    if (std::find(list.objects.begin(), list.objects.end(), entry) == list.objects.end())
      list.objects.push_back(std::move(entry));
  }
  if (list.objects.empty()) return ParseError{ErrorCode::empty_checklist, "no objects in checklist output"};
  return list;
}

std::string serialize_detections(const std::vector<DetectionReport>& reports) {
  std::vector<std::string> lines;
  lines.reserve(reports.size());
  for (const auto& r : reports)
    lines.push_back("[\"object\": " + r.query + ", \"number\": " + std::to_string(r.count) + "]");
  return join(lines, "\n");
}

Expected<UpdatedCaption> parse_updated_caption(std::string_view llm_output) {
  static const std::regex kMarker(R"(updated\s+caption\s*\**\s*:\s*\**)", std::regex::icase);
  static const std::regex kModification(R"(modifications?\s*\**\s*:\s*\**)", std::regex::icase);
  const std::string text(llm_output);
  auto marker = last_match(text, kMarker);
  if (!marker) return ParseError{ErrorCode::missing_marker, "no 'Updated caption:' marker"};
  auto marker_pos = static_cast<std::size_t>(marker->position(0));
  UpdatedCaption out;
  out.caption = trim(std::string_view(text).substr(marker_pos + marker->length(0)));
  if (out.caption.empty()) return ParseError{ErrorCode::missing_marker, "nothing after 'Updated caption:'"};
  auto head = text.substr(0, marker_pos);
  if (auto mod = last_match(head, kModification))
    out.modifications = trim(std::string_view(head).substr(mod->position(0) + mod->length(0)));
  return out;
}

Expected<std::vector<std::string>> parse_question_list(std::string_view llm_output) {
  const std::string text(llm_output);
  std::vector<std::string> questions;
  for (auto pos = text.find('['); pos != std::string::npos; pos = text.find('[', pos + 1)) {
    if (auto items = parse_string_list(text, pos)) {
      for (auto& q : *items) {
        auto t = trim(q);
        if (!t.empty()) questions.push_back(std::move(t));
      }
      if (!questions.empty()) break;
    }
  }
  if (questions.empty()) {
    static const std::regex kNumbered(R"(^\s*\d+\s*[\.\)]\s+(.+?)\s*$)");
    for (const auto& line : split(text, '\n')) {
      std::smatch m;
      if (!std::regex_match(line, m, kNumbered)) continue;
      auto q = trim(m[1].str());
      if (q.size() >= 2 && (q.front() == '"' || q.front() == '\'') && q.back() == q.front())
        q = q.substr(1, q.size() - 2);
      if (!q.empty()) questions.push_back(std::move(q));
    }
  }
  if (questions.empty()) return ParseError{ErrorCode::no_questions, "no questions recoverable"};
  if (questions.size() > 5) questions.resize(5);
  return questions;
}

Expected<std::vector<JudgeVerdict>> parse_judgments_2d(std::string_view judge_output, int n_captions) {
  if (n_captions < 1) return ParseError{ErrorCode::precondition, "n_captions must be >= 1"};
  static const std::regex kVerdict(R"(caption\s*(\d+)\s*\**\s*:\s*\**\s*(better|worse)\b(?!\s+or\b))",
                                   std::regex::icase);
  const std::string text(judge_output);
  std::map<int, Verdict> last;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kVerdict); it != std::sregex_iterator(); ++it) {
    int k = std::stoi((*it)[1].str());
    last[k] = to_lower((*it)[2].str()) == "better" ? Verdict::better : Verdict::worse;
  }
  std::vector<JudgeVerdict> out;
  for (int k = 1; k <= n_captions; ++k) {
    auto found = last.find(k);
    if (found == last.end())
      return ParseError{ErrorCode::incomplete_judgment, "no verdict for caption " + std::to_string(k), k};
    out.push_back({k, found->second});
  }
  return out;
}

Expected<CaptionChoice> parse_judgment_3d(std::string_view judge_output) {
  static const std::regex kBetter(R"(better\s+caption\s*\**\s*:\s*\**\s*caption\s*([12])\b(?!\s+or\b))",
                                  std::regex::icase);
  const std::string text(judge_output);
  auto m = last_match(text, kBetter);
  if (!m) return ParseError{ErrorCode::incomplete_judgment, "no 'Better Caption: Caption N' verdict"};
  return (*m)[1].str() == "1" ? CaptionChoice::caption1 : CaptionChoice::caption2;
}

}  // namespace vfc
