#include <cmath>
#include <cstdio>
#include <map>

#include <spdlog/spdlog.h>

#include "vfc/harness.hpp"
#include "vfc/humaneval.hpp"
#include "vfc/util.hpp"

namespace vfc {
namespace {

double round2(double x) { return std::round(x * 100.0) / 100.0; }

std::string fixed2(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  std::string s = buf;
  return s == "-0.00" ? "0.00" : s;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

struct MethodStats {
  std::vector<double> clip;
  std::vector<double> clip_image;
  int rows = 0;
  int failed = 0;
};

constexpr std::string_view kAblation = "/no_factcheck";

ordered_json opt(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(); }

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return compensated_mean(v);
}

}  // namespace

std::vector<ScoreRow> load_score_rows(const fs::path& path) {
  std::vector<ScoreRow> out;
  auto lines = split(read_file(path), '\n');
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (trim(lines[n]).empty()) continue;
    try {
      out.push_back(ScoreRow::from_json(json::parse(lines[n])));
    } catch (const json::exception& e) {
      fail(ErrorCode::schema_error, path.string() + ":" + std::to_string(n + 1) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorCode::schema_error, path.string() + ":" + std::to_string(n + 1) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Judgment> load_judgments(const fs::path& path) {
  std::vector<Judgment> out;
  auto lines = split(read_file(path), '\n');
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (trim(lines[n]).empty()) continue;
    try {
      out.push_back(Judgment::from_json(json::parse(lines[n])));
    } catch (const json::exception& e) {
      fail(ErrorCode::schema_error, path.string() + ":" + std::to_string(n + 1) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorCode::schema_error, path.string() + ":" + std::to_string(n + 1) + ": " + e.what());
    }
  }
  return out;
}

std::string format_with_delta(double mean, std::optional<double> reference) {
  std::string s = fixed2(mean);
  if (!reference) return s;
  double delta = round2(mean) - round2(*reference);
  std::string d = fixed2(delta);
  if (d[0] != '-' && d != "0.00") d = "+" + d;
  return s + " (" + d + ")";
}

Report build_report(const ReportInputs& inputs) {
  // rows, last occurrence per (item, method) wins
  std::vector<std::string> methods;
  std::map<std::pair<std::string, std::string>, ScoreRow> rows;
  std::size_t row_count = 0;
  for (const auto& p : inputs.scores) {
    for (auto& r : load_score_rows(p)) {
      ++row_count;
      if (std::find(methods.begin(), methods.end(), r.method_id) == methods.end()) methods.push_back(r.method_id);
      auto key = std::make_pair(r.method_id, r.item_id);
      if (rows.count(key)) spdlog::warn("duplicate score row for ({}, {}); keeping the last", r.item_id, r.method_id);
      rows[key] = std::move(r);
    }
  }
  std::vector<Judgment> judgments;
  for (const auto& p : inputs.judgments) {
    auto j = load_judgments(p);
    judgments.insert(judgments.end(), j.begin(), j.end());
  }
  std::vector<json> events;
  for (const auto& p : inputs.votes) {
    auto e = read_event_log(p);
    events.insert(events.end(), e.begin(), e.end());
  }
  if (rows.empty() && judgments.empty() && events.empty()) fail(ErrorCode::empty_report, "report inputs are empty");

  std::map<std::string, MethodStats> stats;
  for (const auto& [key, r] : rows) {
    auto& s = stats[r.method_id];
    ++s.rows;
    if (r.error || (!r.clip_score && !r.clip_image_score)) ++s.failed;
    if (r.clip_score) s.clip.push_back(*r.clip_score);
    if (r.clip_image_score) s.clip_image.push_back(*r.clip_image_score);
  }

  std::string reference = inputs.reference_method;
  if (reference.empty() && !methods.empty()) reference = methods.front();
  if (!reference.empty() && !methods.empty() && !stats.count(reference))
    fail(ErrorCode::config_error, "reference method '" + reference + "' has no score rows");

  Report rep;
  auto& d = rep.data;
  d["reference_method"] = reference;
  d["methods"] = ordered_json::array();
  std::optional<double> ref_clip, ref_img;
  if (stats.count(reference)) {
    ref_clip = mean_of(stats[reference].clip);
    ref_img = mean_of(stats[reference].clip_image);
  }
  bool multi = methods.size() > 1;
  for (const auto& m : methods) {
    const auto& s = stats[m];
    auto mc = mean_of(s.clip), mi = mean_of(s.clip_image);
    bool is_ref = m == reference;
    auto delta = [&](const std::optional<double>& v, const std::optional<double>& ref) -> ordered_json {
      if (!multi || is_ref || !v || !ref) return nullptr;
      return round2(*v) - round2(*ref);
    };
    d["methods"].push_back(ordered_json{{"method", m},
                                        {"clip_score_mean", opt(mc)},
                                        {"clip_score_n", s.clip.size()},
                                        {"clip_score_delta", delta(mc, ref_clip)},
                                        {"clip_image_score_mean", opt(mi)},
                                        {"clip_image_score_n", s.clip_image.size()},
                                        {"clip_image_score_delta", delta(mi, ref_img)},
                                        {"rows", s.rows},
                                        {"failed", s.failed}});
  }

  // winning-rate matrix over every ordered method pair
  d["winrate"] = ordered_json::object();
  using Getter = std::optional<double> ScoreRow::*;
  for (auto [name, field] : {std::pair<const char*, Getter>{"clip_score", &ScoreRow::clip_score},
                             std::pair<const char*, Getter>{"clip_image_score", &ScoreRow::clip_image_score}}) {
    ordered_json cells = ordered_json::array();
    for (const auto& a : methods) {
      for (const auto& b : methods) {
        if (a == b) continue;
        std::vector<double> va, vb;
        for (const auto& [key, r] : rows) {
          if (key.first != a || !(r.*field)) continue;
          auto other = rows.find({b, key.second});
          if (other == rows.end() || !(other->second.*field)) continue;
          va.push_back(*(r.*field));
          vb.push_back(*(other->second.*field));
        }
        if (va.empty()) continue;
        auto w = winning_rate(va, vb);
        cells.push_back(ordered_json{{"ours", a}, {"baseline", b}, {"wins", w.wins}, {"losses", w.losses},
                                     {"ties", w.ties}, {"n", w.n}, {"rate", w.rate}});
      }
    }
    d["winrate"][name] = cells;
  }

  // judge tallies: "better" counts the method beating the caption it was compared with
  struct JudgeTally {
    std::string method, versus;
    int better = 0, worse = 0, unjudged = 0;
  };
  std::vector<JudgeTally> jt;
  auto jslot = [&](const std::string& m, const std::string& v) -> JudgeTally& {
    for (auto& t : jt)
      if (t.method == m && t.versus == v) return t;
    jt.push_back({m, v});
    return jt.back();
  };
  for (const auto& j : judgments) {
    if (j.kind == "3d") {
      if (j.candidate_methods.size() != 2) continue;
      auto& t = jslot(j.candidate_methods[0], j.candidate_methods[1]);
      if (!j.judged || !j.choice)
        ++t.unjudged;
      else if (*j.choice == CaptionChoice::caption1)
        ++t.better;
      else
        ++t.worse;
    } else {
      for (std::size_t k = 0; k < j.candidate_methods.size(); ++k) {
        auto& t = jslot(j.candidate_methods[k], j.reference_method);
        if (!j.judged || k >= j.verdicts.size())
          ++t.unjudged;
        else if (j.verdicts[k].verdict == Verdict::better)
          ++t.better;
        else
          ++t.worse;
      }
    }
  }
  d["judge"] = ordered_json::array();
  for (const auto& t : jt)
    d["judge"].push_back(ordered_json{{"method", t.method}, {"versus", t.versus}, {"better", t.better},
                                      {"worse", t.worse}, {"unjudged", t.unjudged}});

  // human study
  auto human = tally_results(replay_events(events));
  d["human"] = ordered_json::array();
  for (const auto& h : human) d["human"].push_back(h.to_json());

  // ablation: "<m>" next to "<m>/no_factcheck"
  d["ablation"] = ordered_json::array();
  for (const auto& m : methods) {
    if (m.size() > kAblation.size() && m.compare(m.size() - kAblation.size(), kAblation.size(), kAblation) == 0)
      continue;
    auto ab = m + std::string(kAblation);
    if (!stats.count(ab)) continue;
    const auto& f = stats[m];
    const auto& n = stats[ab];
    d["ablation"].push_back(ordered_json{
        {"method", m},
        {"full", {{"clip_score_mean", opt(mean_of(f.clip))}, {"clip_image_score_mean", opt(mean_of(f.clip_image))}}},
        {"no_factcheck",
         {{"clip_score_mean", opt(mean_of(n.clip))}, {"clip_image_score_mean", opt(mean_of(n.clip_image))}}}});
  }
  d["counts"] = ordered_json{{"score_rows", row_count}, {"judgments", judgments.size()}, {"vote_events", events.size()}};

  // text rendering
  std::string t;
  auto cell = [&](const std::optional<double>& v, const std::optional<double>& ref, bool is_ref) {
    if (!v) return std::string("-");
    return format_with_delta(*v, (!multi || is_ref) ? std::nullopt : ref);
  };
  std::size_t w0 = 8;
  for (const auto& m : methods) w0 = std::max(w0, m.size() + 2);
  if (!methods.empty()) {
    t += pad("Method", w0) + pad("CLIP-Score", 18) + pad("CLIP-Image-Score", 20) + "n\n";
    for (const auto& m : methods) {
      const auto& s = stats[m];
      bool is_ref = m == reference;
      t += pad(m + (is_ref && multi ? "*" : ""), w0) + pad(cell(mean_of(s.clip), ref_clip, is_ref), 18) +
           pad(cell(mean_of(s.clip_image), ref_img, is_ref), 20) + std::to_string(s.rows);
      if (s.failed) t += " (" + std::to_string(s.failed) + " failed)";
      t += "\n";
    }
    if (multi) t += "* reference method; deltas in parentheses\n";
  }
  for (const auto& [metric, cells] : d["winrate"].items()) {
    if (cells.empty()) continue;
    t += "\nWinning rate (" + metric + ")\n";
    for (const auto& c : cells)
      t += "  " + c["ours"].get<std::string>() + " vs " + c["baseline"].get<std::string>() + ": " +
           fixed2(100.0 * c["rate"].get<double>()) + "% (" + std::to_string(c["wins"].get<int>()) + " wins, " +
           std::to_string(c["losses"].get<int>()) + " losses, " + std::to_string(c["ties"].get<int>()) +
           " ties, n=" + std::to_string(c["n"].get<int>()) + ")\n";
  }
  if (!jt.empty()) {
    t += "\nLLM judge\n";
    for (const auto& j : jt)
      t += "  " + j.method + " vs " + j.versus + ": better " + std::to_string(j.better) + ", worse " +
           std::to_string(j.worse) + ", unjudged " + std::to_string(j.unjudged) + "\n";
  }
  if (!human.empty()) {
    t += "\nHuman study\n";
    for (const auto& h : human)
      t += "  " + h.method_a + " vs " + h.method_b + ": " + h.method_a + " preferred " +
           std::to_string(h.ours_preferred) + ", " + h.method_b + " preferred " + std::to_string(h.baseline_preferred) +
           ", open " + std::to_string(h.open_tasks) + "\n";
  }
  if (!d["ablation"].empty()) {
    t += "\nAblation\n";
    t += "  " + pad("Method", w0) + pad("full", 12) + "no_factcheck\n";
    for (const auto& a : d["ablation"]) {
      auto v = [](const ordered_json& x) { return x.is_null() ? std::string("-") : fixed2(x.get<double>()); };
      t += "  " + pad(a["method"].get<std::string>(), w0) + pad(v(a["full"]["clip_score_mean"]), 12) +
           v(a["no_factcheck"]["clip_score_mean"]) + "\n";
    }
  }
  rep.text = t;
  return rep;
}

Report write_report(const ReportInputs& inputs, const fs::path& out_dir) {
  auto rep = build_report(inputs);
  write_file_atomic(out_dir / "report.json", rep.data.dump(2) + "\n");
  write_file_atomic(out_dir / "report.txt", rep.text);
  return rep;
}

}  // namespace vfc
