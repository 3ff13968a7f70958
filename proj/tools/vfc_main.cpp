// Command-line front end. Everything goes through the C API in libvfc.
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <pthread.h>

#include "CLI11.hpp"
#include "vfc/vfc.h"

namespace {

int report_failure(vfc_status st) {
  std::fprintf(stderr, "error: %s: %s\n", vfc_status_string(st), vfc_last_error_message());
  return 1;
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

struct Globals {
  std::string mock_fixtures;
  bool offline = false;
  std::string log_level = "info";
};

struct BatchArgs {
  std::string config;
  std::string manifest;
  std::string output;
  std::vector<std::string> captions;
  std::vector<std::string> baselines;
  bool no_factcheck = false;
  std::string style;
  int concurrency = 0;
};

int run_batch(const Globals& g, const BatchArgs& a, const char* task) {
  const char* token = std::getenv("VFC_API_TOKEN");
  vfc_context* ctx = nullptr;
  vfc_status st = vfc_context_create(a.config.empty() ? nullptr : a.config.c_str(),
                                     g.mock_fixtures.empty() ? nullptr : g.mock_fixtures.c_str(), g.offline ? 1 : 0,
                                     token, &ctx);
  if (st != VFC_OK) return report_failure(st);
  if (a.no_factcheck && (st = vfc_context_set_variant(ctx, "no_factcheck")) != VFC_OK) {
    vfc_context_destroy(ctx);
    return report_failure(st);
  }
  if (!a.style.empty()) vfc_context_set_style(ctx, a.style.c_str());
  if (a.concurrency > 0 && (st = vfc_context_set_concurrency(ctx, a.concurrency)) != VFC_OK) {
    vfc_context_destroy(ctx);
    return report_failure(st);
  }

  auto caps = c_strings(a.captions);
  auto bases = c_strings(a.baselines);
  vfc_batch_result res{};
  char* out_path = nullptr;
  st = vfc_run_batch(ctx, task, a.manifest.empty() ? nullptr : a.manifest.c_str(), caps.data(), caps.size(),
                     bases.data(), bases.size(), a.output.empty() ? nullptr : a.output.c_str(), &res, &out_path);
  vfc_context_destroy(ctx);
  if (st != VFC_OK) return report_failure(st);
  std::printf("%s\n", out_path);
  std::fprintf(stderr, "%d items: %d computed, %d reused, %d failed\n", res.total, res.processed, res.skipped,
               res.failed);
  vfc_string_free(out_path);
  return res.failed > 0 ? 2 : 0;
}

void add_batch_options(CLI::App* cmd, BatchArgs& a, bool caption) {
  cmd->add_option("--config", a.config, "run configuration (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--manifest", a.manifest, "dataset manifest (JSONL)")->check(CLI::ExistingFile);
  cmd->add_option("--out", a.output, "output JSONL (default: <output_dir>/<task>.jsonl)");
  cmd->add_option("--concurrency", a.concurrency, "items in flight (overrides the config)");
  if (caption) {
    cmd->add_flag("--no-factcheck", a.no_factcheck, "stop after summarizing the proposals (ablation)");
    cmd->add_option("--style", a.style, "instruction appended to the summary and caption prompts");
  } else {
    cmd->add_option("--captions", a.captions, "caption (or score) files for our method")->check(CLI::ExistingFile);
    cmd->add_option("--baselines", a.baselines, "caption (or score) files for baselines")->check(CLI::ExistingFile);
  }
}

int serve(const Globals&, const std::string& pairs, std::string log, const std::string& host, int port,
          const std::string& static_dir, const std::string& images_dir, std::uint64_t seed) {
  if (log.empty()) log = (std::filesystem::path(pairs).parent_path() / "votes.jsonl").string();
  vfc_humaneval* he = nullptr;
  vfc_status st = vfc_humaneval_open(pairs.c_str(), log.c_str(), seed, &he);
  if (st != VFC_OK) return report_failure(st);

  // block the signals before the server threads start so only sigwait sees them
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  int bound = 0;
  st = vfc_humaneval_serve(he, host.c_str(), port, static_dir.empty() ? nullptr : static_dir.c_str(),
                           images_dir.empty() ? nullptr : images_dir.c_str(), &bound);
  if (st != VFC_OK) {
    vfc_humaneval_close(he);
    return report_failure(st);
  }
  std::printf("listening on http://%s:%d (votes: %s)\n", host.c_str(), bound, log.c_str());
  std::fflush(stdout);
  int sig = 0;
  sigwait(&set, &sig);
  vfc_humaneval_stop(he);
  vfc_humaneval_close(he);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Caption proposal, fact-checking and evaluation toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--mock-fixtures", g.mock_fixtures, "serve every model call from a fixtures file")
      ->check(CLI::ExistingFile);
  app.add_flag("--offline", g.offline, "replay model calls from the cache only");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off");

  BatchArgs cap2d, cap3d;
  auto* c2 = app.add_subcommand("caption2d", "caption images");
  add_batch_options(c2, cap2d, true);
  c2->get_option("--config")->required();
  c2->get_option("--manifest")->required();
  auto* c3 = app.add_subcommand("caption3d", "caption multi-view 3D objects");
  add_batch_options(c3, cap3d, true);
  c3->get_option("--config")->required();
  c3->get_option("--manifest")->required();

  auto* ev = app.add_subcommand("eval", "score captions");
  ev->require_subcommand(1);
  struct EvalCmd {
    const char* name;
    const char* task;
    const char* help;
    BatchArgs args;
    CLI::App* cmd = nullptr;
  };
  std::vector<EvalCmd> evals{{"clip", "clip", "CLIP-Score of caption vs image", {}},
                             {"clip-image", "clip_image", "CLIP-Image-Score via caption-to-image reconstruction", {}},
                             {"winrate", "winrate", "per-item winning rate between score files", {}},
                             {"judge", "judge", "LLM-as-judge verdicts", {}}};
  for (auto& e : evals) {
    e.cmd = ev->add_subcommand(e.name, e.help);
    add_batch_options(e.cmd, e.args, false);
    e.cmd->get_option("--captions")->required();
  }

  std::string report_out, reference;
  std::vector<std::string> scores, judgments, votes;
  auto* rp = app.add_subcommand("report", "summarize scores, judgments and votes");
  rp->add_option("--out", report_out, "directory for report.json and report.txt")->required();
  rp->add_option("--scores", scores, "score JSONL files")->check(CLI::ExistingFile);
  rp->add_option("--judgments", judgments, "judgment JSONL files")->check(CLI::ExistingFile);
  rp->add_option("--votes", votes, "human-eval vote logs")->check(CLI::ExistingFile);
  rp->add_option("--reference", reference, "method the deltas are taken against (default: first seen)");

  std::string pairs, vote_log, host = "127.0.0.1", static_dir, images_dir;
  int port = 8080;
  std::uint64_t seed = 0;
  auto* sv = app.add_subcommand("serve-humaneval", "run the pairwise human-evaluation service");
  sv->add_option("--pairs", pairs, "pair tasks (JSONL)")->required()->check(CLI::ExistingFile);
  sv->add_option("--port", port, "port (0 = any free port)");
  sv->add_option("--host", host, "bind address");
  sv->add_option("--log", vote_log, "vote log (default: votes.jsonl next to the pairs file)");
  sv->add_option("--static", static_dir, "UI bundle directory")->check(CLI::ExistingDirectory);
  sv->add_option("--images", images_dir, "image directory served under /images")->check(CLI::ExistingDirectory);
  sv->add_option("--seed", seed, "display-order seed");

  CLI11_PARSE(app, argc, argv);

  if (vfc_status st = vfc_set_log_level(g.log_level.c_str()); st != VFC_OK) return report_failure(st);

  if (*c2) return run_batch(g, cap2d, "caption2d");
  if (*c3) return run_batch(g, cap3d, "caption3d");
  for (auto& e : evals)
    if (*e.cmd) return run_batch(g, e.args, e.task);
  if (*rp) {
    auto s = c_strings(scores), j = c_strings(judgments), v = c_strings(votes);
    char* text = nullptr;
    vfc_status st = vfc_write_report(s.data(), s.size(), j.data(), j.size(), v.data(), v.size(),
                                     reference.empty() ? nullptr : reference.c_str(), report_out.c_str(), &text);
    if (st != VFC_OK) return report_failure(st);
    std::fputs(text, stdout);
    vfc_string_free(text);
    return 0;
  }
  if (*sv) return serve(g, pairs, vote_log, host, port, static_dir, images_dir, seed);
  return 0;
}
