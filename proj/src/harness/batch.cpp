#include <algorithm>
#include <atomic>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "vfc/harness.hpp"
#include "vfc/util.hpp"

namespace vfc {
namespace {

constexpr char kSep = '\x1f';

struct WorkItem {
  std::string key;
  std::function<ordered_json()> run;
  std::function<ordered_json(const std::string&, const std::string&)> on_error;  // (code, message)
};

std::string default_output_name(const RunConfig& c, BatchTask task) {
  std::string name(to_string(task));
  if (task == BatchTask::caption2d || task == BatchTask::caption3d) name += "." + std::string(to_string(c.variant));
  return name + ".jsonl";
}

std::string line_key(BatchTask task, const json& line) {
  switch (task) {
    case BatchTask::caption2d: return line.at("item_id").get<std::string>();
    case BatchTask::caption3d: return line.at("object_id").get<std::string>();
    case BatchTask::clip:
    case BatchTask::clip_image:
      return line.at("item_id").get<std::string>() + kSep + line.at("method_id").get<std::string>();
    case BatchTask::judge: {
      std::string key = line.at("item_id").get<std::string>();
      for (const auto& m : line.at("candidate_methods")) key += kSep + m.get<std::string>();
      return key;
    }
    case BatchTask::winrate: break;
  }
  return {};
}

bool line_failed(BatchTask task, const json& line) {
  if (task == BatchTask::judge) return !line.value("judged", false);
  return line.contains("error") && !line["error"].is_null();
}

void require_endpoint(const std::optional<ModelEndpoint>& e, const char* name, BatchTask task) {
  if (!e)
    fail(ErrorCode::config_error,
         std::string("task ") + std::string(to_string(task)) + " needs a '" + name + "' endpoint");
}

const Manifest& need_manifest(const Manifest* m, BatchTask task) {
  if (!m) fail(ErrorCode::config_error, "task " + std::string(to_string(task)) + " needs a manifest");
  return *m;
}

std::string method_from_path(const fs::path& p) {
  auto stem = p.filename().string();
  auto dot = stem.find('.');
  return dot == std::string::npos ? stem : stem.substr(0, dot);
}

/// Caption rows grouped by method, methods in first-seen order.
std::vector<std::pair<std::string, std::map<std::string, std::optional<std::string>>>> group_captions(
    const std::vector<fs::path>& paths) {
  std::vector<std::pair<std::string, std::map<std::string, std::optional<std::string>>>> out;
  for (const auto& p : paths) {
    for (auto& row : load_captions(p)) {
      auto it = std::find_if(out.begin(), out.end(), [&](const auto& g) { return g.first == row.method_id; });
      if (it == out.end()) {
        out.push_back({row.method_id, {}});
        it = std::prev(out.end());
      }
      it->second[row.item_id] = row.caption;
    }
  }
  return out;
}

ScoreRow failed_row(const std::string& item, const std::string& method, const std::string& why) {
  ScoreRow r;
  r.item_id = item;
  r.method_id = method;
  r.error = why;
  return r;
}

std::vector<WorkItem> caption2d_work(Context& ctx, const Manifest& m) {
  const auto& c = ctx.config();
  if (c.captioners.empty()) fail(ErrorCode::config_error, "caption2d needs at least one captioner");
  require_endpoint(c.llm, "llm", BatchTask::caption2d);
  if (c.variant == Variant::full) require_endpoint(c.detector, "detector", BatchTask::caption2d);
  Pipeline2DConfig p;
  p.captioners = c.captioners;
  p.llm = *c.llm;
  if (c.detector) p.detector = *c.detector;
  p.box_threshold = c.box_threshold;
  p.text_threshold = c.text_threshold;
  p.degrade_on_detector_failure = c.degrade_on_detector_failure;
  p.record_timings = c.record_timings;

  std::vector<WorkItem> work;
  for (const auto& e : m.entries) {
    WorkItem w;
    w.key = e.item_id;
    w.run = [&ctx, p, e, variant = c.variant, style = c.style, timings = c.record_timings] {
      auto rec = run_pipeline_2d(ctx.gateway(), e.item_id, e.image, p, variant, style);
      rec.image.location = e.image_path;
      return rec.to_json(timings);
    };
    w.on_error = [e, variant = c.variant](const std::string& code, const std::string& msg) {
      CaptionRecord rec;
      rec.item_id = e.item_id;
      rec.image = e.image;
      rec.image.location = e.image_path;
      rec.variant = variant;
      rec.error = RecordError{code, msg};
      return rec.to_json(false);
    };
    work.push_back(std::move(w));
  }
  return work;
}

std::vector<WorkItem> caption3d_work(Context& ctx, const Manifest& m) {
  const auto& c = ctx.config();
  Pipeline3DConfig p;
  p.captioners = c.captioners_3d.empty() ? c.captioners : c.captioners_3d;
  if (p.captioners.empty()) fail(ErrorCode::config_error, "caption3d needs at least one captioner");
  require_endpoint(c.llm, "llm", BatchTask::caption3d);
  if (c.variant == Variant::full) require_endpoint(c.vqa, "vqa", BatchTask::caption3d);
  p.llm = *c.llm;
  if (c.vqa) p.vqa = *c.vqa;
  p.record_timings = c.record_timings;

  std::vector<WorkItem> work;
  for (const auto& e : m.entries) {
    WorkItem w;
    w.key = e.item_id;
    w.run = [&ctx, p, e, variant = c.variant, timings = c.record_timings] {
      ObjectViews obj{e.item_id, e.views};
      auto rec = run_pipeline_3d(ctx.gateway(), obj, p, variant);
      for (std::size_t k = 0; k < rec.view_records.size() && k < e.view_paths.size(); ++k)
        rec.view_records[k].image.location = e.view_paths[k];
      return rec.to_json(timings);
    };
    w.on_error = [e, variant = c.variant](const std::string& code, const std::string& msg) {
      Object3DCaptionRecord rec;
      rec.object_id = e.item_id;
      rec.variant = variant;
      rec.error = RecordError{code, msg};
      return rec.to_json(false);
    };
    work.push_back(std::move(w));
  }
  return work;
}

std::vector<WorkItem> score_work(Context& ctx, const Manifest& m, BatchTask task, const EvalInputs& in) {
  const auto& c = ctx.config();
  require_endpoint(c.embedder, "embedder", task);
  if (task == BatchTask::clip_image) {
    if (m.kind == ManifestKind::images2d)
      require_endpoint(c.image_gen, "image_gen", task);
    else
      require_endpoint(c.view3d_gen, "view3d_gen", task);
  }
  std::vector<fs::path> paths = in.captions;
  paths.insert(paths.end(), in.baselines.begin(), in.baselines.end());
  if (paths.empty()) fail(ErrorCode::config_error, "evaluation needs at least one captions file");

  std::vector<WorkItem> work;
  for (const auto& [method, captions] : group_captions(paths)) {
    for (const auto& [item, caption] : captions) {
      WorkItem w;
      w.key = item + kSep + method;
      w.run = [&ctx, &m, task, item = item, method = method, caption = caption] {
        const auto& cfg = ctx.config();
        const auto* entry = m.find(item);
        if (!entry) return failed_row(item, method, "item not in manifest").to_json();
        if (!caption || trim(*caption).empty()) return failed_row(item, method, "no caption (failed record)").to_json();
        ScoreRow row;
        row.item_id = item;
        row.method_id = method;
        auto& gw = ctx.gateway();
        if (task == BatchTask::clip) {
          if (m.kind == ManifestKind::images2d) {
            row.clip_score = clip_score(gw, *cfg.embedder, entry->image, *caption, cfg.clip_score_mode,
                                        cfg.token_warn_threshold);
          } else {
            std::vector<double> per_view;
            for (const auto& v : entry->views)
              per_view.push_back(
                  clip_score(gw, *cfg.embedder, v.image, *caption, cfg.clip_score_mode, cfg.token_warn_threshold));
            row.clip_score = compensated_mean(per_view);
          }
        } else {
          auto seed = reconstruction_seed(item, method);
          ClipImageResult r =
              m.kind == ManifestKind::images2d
                  ? clip_image_score(gw, *cfg.embedder, *cfg.image_gen, entry->image, *caption, seed)
                  : clip_image_score(gw, *cfg.embedder, *cfg.view3d_gen, ObjectViews{item, entry->views}, *caption,
                                     seed);
          row.clip_image_score = r.score;
          row.seed = r.seed;
          row.error = r.error;
        }
        return row.to_json();
      };
      w.on_error = [item = item, method = method](const std::string& code, const std::string& msg) {
        return failed_row(item, method, code + ": " + msg).to_json();
      };
      work.push_back(std::move(w));
    }
  }
  return work;
}

std::vector<WorkItem> judge_work(Context& ctx, const Manifest& m, const EvalInputs& in) {
  const auto& c = ctx.config();
  if (!c.judge && !c.llm) fail(ErrorCode::config_error, "task judge needs a 'judge' (or 'llm') endpoint");
  if (in.captions.empty() || in.baselines.empty())
    fail(ErrorCode::config_error, "judge needs --captions (ours) and at least one baseline");
  auto ours_groups = group_captions(in.captions);
  auto base_groups = group_captions(in.baselines);
  const auto& [ours_method, ours] = ours_groups.front();
  bool is3d = m.kind == ManifestKind::objects3d;

  std::vector<WorkItem> work;
  for (const auto& entry : m.entries) {
    auto oc = ours.find(entry.item_id);
    std::optional<std::string> ours_caption = oc == ours.end() ? std::nullopt : oc->second;

    std::vector<std::pair<std::string, std::string>> candidates;  // method, caption
    std::vector<std::string> missing;
    for (const auto& [method, caps] : base_groups) {
      auto it = caps.find(entry.item_id);
      if (it != caps.end() && it->second && !trim(*it->second).empty())
        candidates.emplace_back(method, *it->second);
      else
        missing.push_back(method);
    }
    if (!missing.empty())
      spdlog::warn("[{}] no usable caption from: {}", entry.item_id, join(missing, ", "));

    // 2D judges up to four candidates per prompt; 3D judges one baseline at a time
    std::size_t group = is3d ? 1 : 4;
    for (std::size_t start = 0; start < candidates.size(); start += group) {
      std::vector<std::pair<std::string, std::string>> chunk(
          candidates.begin() + start, candidates.begin() + std::min(candidates.size(), start + group));
      Judgment shell;
      shell.item_id = entry.item_id;
      shell.judge_id = (c.judge ? *c.judge : *c.llm).id;
      shell.kind = is3d ? "3d" : "2d";
      if (is3d) {
        shell.candidate_methods = {chunk[0].first, ours_method};
      } else {
        shell.reference_method = ours_method;
        for (const auto& [meth, cap] : chunk) shell.candidate_methods.push_back(meth);
      }
      WorkItem w;
      w.key = entry.item_id;
      for (const auto& meth : shell.candidate_methods) w.key += kSep + meth;
      w.run = [&ctx, entry = entry, chunk, shell, ours_caption, is3d] {
        if (!ours_caption || trim(*ours_caption).empty()) {
          auto j = shell;
          j.error = "no caption for the reference method";
          return j.to_json();
        }
        const auto& cfg = ctx.config();
        const auto& judge = cfg.judge ? *cfg.judge : *cfg.llm;
        Judgment j;
        if (is3d) {
          std::vector<ImageRef> views;
          for (std::size_t k = 0; k < entry.views.size() && k < 2; ++k) views.push_back(entry.views[k].image);
          j = judge_3d(ctx.gateway(), judge, views, chunk[0].second, *ours_caption);
        } else {
          std::vector<std::string> caps;
          for (const auto& [meth, cap] : chunk) caps.push_back(cap);
          j = judge_2d(ctx.gateway(), judge, entry.image, *ours_caption, caps);
        }
        j.item_id = shell.item_id;
        j.candidate_methods = shell.candidate_methods;
        j.reference_method = shell.reference_method;
        return j.to_json();
      };
      w.on_error = [shell](const std::string& code, const std::string& msg) {
        auto j = shell;
        j.error = code + ": " + msg;
        return j.to_json();
      };
      work.push_back(std::move(w));
    }
  }
  return work;
}

BatchResult run_winrate(const EvalInputs& in, const fs::path& output) {
  if (in.captions.empty() || in.baselines.empty())
    fail(ErrorCode::config_error, "winrate needs score files for ours and at least one baseline");
  auto load = [](const std::vector<fs::path>& paths) {
    std::vector<ScoreRow> rows;
    for (const auto& p : paths) {
      auto r = load_score_rows(p);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    return rows;
  };
  auto ours = load(in.captions);
  auto base = load(in.baselines);
  auto methods = [](const std::vector<ScoreRow>& rows) {
    std::vector<std::string> out;
    for (const auto& r : rows)
      if (std::find(out.begin(), out.end(), r.method_id) == out.end()) out.push_back(r.method_id);
    return out;
  };
  using Getter = std::optional<double> ScoreRow::*;
  std::vector<std::pair<std::string, Getter>> metrics{{"clip_score", &ScoreRow::clip_score},
                                                      {"clip_image_score", &ScoreRow::clip_image_score}};
  std::string text;
  BatchResult res;
  res.output = output;
  for (const auto& om : methods(ours)) {
    for (const auto& bm : methods(base)) {
      if (om == bm) continue;
      for (const auto& [name, field] : metrics) {
        std::map<std::string, double> a, b;
        for (const auto& r : ours)
          if (r.method_id == om && r.*field) a[r.item_id] = *(r.*field);
        for (const auto& r : base)
          if (r.method_id == bm && r.*field) b[r.item_id] = *(r.*field);
        std::vector<double> va, vb;
        for (const auto& [item, s] : a)
          if (auto it = b.find(item); it != b.end()) {
            va.push_back(s);
            vb.push_back(it->second);
          }
        if (va.empty()) continue;
        auto w = winning_rate(va, vb);
        ordered_json line{{"ours", om},   {"baseline", bm}, {"metric", name},   {"wins", w.wins},
                          {"losses", w.losses}, {"ties", w.ties}, {"n", w.n}, {"rate", w.rate}};
        text += line.dump() + "\n";
        ++res.total;
        ++res.processed;
      }
    }
  }
  write_file_atomic(output, text);
  return res;
}

}  // namespace

std::string_view to_string(BatchTask t) noexcept {
  switch (t) {
    case BatchTask::caption2d: return "caption2d";
    case BatchTask::caption3d: return "caption3d";
    case BatchTask::clip: return "clip";
    case BatchTask::clip_image: return "clip_image";
    case BatchTask::winrate: return "winrate";
    case BatchTask::judge: return "judge";
  }
  return "?";
}

BatchTask batch_task_from_string(std::string_view s) {
  for (auto t : {BatchTask::caption2d, BatchTask::caption3d, BatchTask::clip, BatchTask::clip_image,
                 BatchTask::winrate, BatchTask::judge})
    if (to_string(t) == s) return t;
  if (s == "clip-image") return BatchTask::clip_image;
  fail(ErrorCode::config_error, "unknown task '" + std::string(s) + "'");
}

std::vector<CaptionRow> load_captions(const fs::path& path) {
  std::vector<CaptionRow> out;
  auto lines = split(read_file(path), '\n');
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (trim(lines[n]).empty()) continue;
    try {
      auto j = json::parse(lines[n]);
      CaptionRow r;
      r.item_id = j.contains("item_id") ? j["item_id"].get<std::string>() : j.at("object_id").get<std::string>();
      if (j.contains("method") && j["method"].is_string())
        r.method_id = j["method"].get<std::string>();
      else if (j.contains("method_id") && j["method_id"].is_string())
        r.method_id = j["method_id"].get<std::string>();
      else
        r.method_id = method_from_path(path);
      static const std::string kAblation = "/no_factcheck";
      if (j.value("variant", "") == "no_factcheck" &&
          (r.method_id.size() < kAblation.size() ||
           r.method_id.compare(r.method_id.size() - kAblation.size(), kAblation.size(), kAblation) != 0))
        r.method_id += kAblation;
      bool failed = j.contains("error") && !j["error"].is_null();
      for (const char* key : {"caption", "final_caption", "fused_caption"}) {
        if (j.contains(key) && j[key].is_string()) {
          r.caption = j[key].get<std::string>();
          break;
        }
      }
      if (failed || (r.caption && trim(*r.caption).empty())) r.caption.reset();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      fail(ErrorCode::schema_error, path.string() + ":" + std::to_string(n + 1) + ": " + e.what());
    }
  }
  return out;
}

BatchResult run_batch(Context& ctx, const Manifest* manifest, BatchTask task, const BatchOptions& options) {
  const auto& cfg = ctx.config();
  fs::path output = options.output.empty() ? cfg.output_dir / default_output_name(cfg, task) : options.output;
  if (task == BatchTask::winrate) return run_winrate(options.eval, output);

  if ((task == BatchTask::caption2d && manifest && manifest->kind != ManifestKind::images2d) ||
      (task == BatchTask::caption3d && manifest && manifest->kind != ManifestKind::objects3d))
    fail(ErrorCode::config_error, "manifest kind " + std::string(to_string(manifest->kind)) +
                                      " does not fit task " + std::string(to_string(task)));

  std::vector<WorkItem> work;
  switch (task) {
    case BatchTask::caption2d: work = caption2d_work(ctx, need_manifest(manifest, task)); break;
    case BatchTask::caption3d: work = caption3d_work(ctx, need_manifest(manifest, task)); break;
    case BatchTask::clip:
    case BatchTask::clip_image: work = score_work(ctx, need_manifest(manifest, task), task, options.eval); break;
    case BatchTask::judge: work = judge_work(ctx, need_manifest(manifest, task), options.eval); break;
    case BatchTask::winrate: break;
  }

  const std::string digest = config_digest(cfg, task);

  // resume: completed lines from an earlier run with the same digest
  std::map<std::string, std::string> done;
  if (fs::exists(output)) {
    auto lines = split(read_file(output), '\n');
    for (const auto& line : lines) {
      if (trim(line).empty()) continue;
      try {
        auto j = json::parse(line);
        if (j.value("config_digest", "") != digest || line_failed(task, j)) continue;
        done[line_key(task, j)] = line;
      } catch (const json::exception&) {
        spdlog::warn("ignoring unreadable line in {}", output.string());
      }
    }
  }

  BatchResult res;
  res.output = output;
  res.total = static_cast<int>(work.size());
  std::vector<std::optional<std::string>> results(work.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < work.size(); ++i) {
    if (auto it = done.find(work[i].key); it != done.end()) {
      results[i] = it->second;
      ++res.skipped;
    } else {
      pending.push_back(i);
    }
  }
  if (res.skipped > 0) spdlog::info("resuming {}: {} of {} items already complete", output.string(), res.skipped, res.total);

  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  std::mutex write_mutex;
  std::ofstream append;
  if (!pending.empty()) {
    bool needs_newline = false;
    if (fs::exists(output) && fs::file_size(output) > 0) {
      std::ifstream in(output, std::ios::binary);
      in.seekg(-1, std::ios::end);
      needs_newline = in.get() != '\n';
    }
    append.open(output, std::ios::app | std::ios::binary);
    if (!append) fail(ErrorCode::io_error, "cannot open " + output.string());
    if (needs_newline) append << '\n';
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t p = next++; p < pending.size(); p = next++) {
      auto& item = work[pending[p]];
      ordered_json line;
      try {
        line = item.run();
      } catch (const Error& e) {
        line = item.on_error(std::string(to_string(e.code())), e.what());
      } catch (const std::exception& e) {
        line = item.on_error("InternalError", e.what());
      }
      line["config_digest"] = digest;
      auto text = line.dump();
      std::lock_guard lock(write_mutex);
      append << text << '\n';
      append.flush();
      results[pending[p]] = std::move(text);
    }
  };
  int threads = std::min<int>(cfg.concurrency, static_cast<int>(pending.size()));
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (append.is_open()) append.close();
  res.processed = static_cast<int>(pending.size());

  std::string text;
  for (const auto& r : results) {
    text += *r + "\n";
    if (line_failed(task, json::parse(*r))) ++res.failed;
  }
  write_file_atomic(output, text);
  spdlog::info("{}: {} items, {} computed, {} reused, {} failed", output.string(), res.total, res.processed,
               res.skipped, res.failed);
  if (res.total > 0 && res.failed == res.total)
    fail(ErrorCode::batch_failed, "all " + std::to_string(res.total) + " items failed; see " + output.string());
  return res;
}

}  // namespace vfc
