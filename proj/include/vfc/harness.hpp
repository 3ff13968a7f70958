#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vfc/cache.hpp"
#include "vfc/gateway.hpp"
#include "vfc/metrics.hpp"
#include "vfc/mock_backend.hpp"
#include "vfc/pipeline.hpp"
#include "vfc/transport.hpp"

namespace vfc {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// manifests

enum class ManifestKind { images2d, objects3d };
std::string_view to_string(ManifestKind k) noexcept;

struct ManifestEntry {
  std::string item_id;
  ImageRef image;                      // 2D; location resolved for loading
  std::string image_path;              // 2D; as written in the manifest
  std::vector<ObjectView> views;       // 3D; locations resolved
  std::vector<std::string> view_paths; // 3D; as written
  std::vector<std::string> gt_captions;
};

struct Manifest {
  ManifestKind kind = ManifestKind::images2d;
  fs::path path;
  std::vector<ManifestEntry> entries;

  const ManifestEntry* find(const std::string& item_id) const;
};

/// JSONL, one entry per line:
///   {"item_id": "...", "image": "rel/path.png"}                         (2D)
///   {"item_id": "...", "views": [{"view_id", "image", "azimuth", "elevation"}]}  (3D)
/// Paths resolve against the manifest's directory. Views without angles take `default_views`.
/// Errors: schema_error (line), duplicate_ids (all), missing_files (all).
Manifest load_manifest(const fs::path& path, const std::vector<ViewAngle>& default_views = {{0, 0}, {180, 0}});

// ---------------------------------------------------------------------------
// run configuration

struct RunConfig {
  std::vector<ModelEndpoint> captioners;     // 2D proposal
  std::vector<ModelEndpoint> captioners_3d;  // 3D proposal; falls back to `captioners`
  std::optional<ModelEndpoint> llm;
  std::optional<ModelEndpoint> detector;
  std::optional<ModelEndpoint> vqa;
  std::optional<ModelEndpoint> embedder;
  std::optional<ModelEndpoint> image_gen;
  std::optional<ModelEndpoint> view3d_gen;
  std::optional<ModelEndpoint> judge;

  Variant variant = Variant::full;
  StyleInstruction style;
  int concurrency = 4;
  fs::path cache_dir;   // empty = in-memory cache
  fs::path output_dir = "out";
  std::int64_t seed = 0;
  ClipScoreMode clip_score_mode = ClipScoreMode::cosine100;
  double box_threshold = 0.35;
  double text_threshold = 0.25;
  bool degrade_on_detector_failure = false;
  bool record_timings = true;
  std::size_t token_warn_threshold = 77;
  int max_in_flight = 0;  // 0 = same as concurrency
  std::map<Role, int> role_limits;
  RetryPolicy retry;
  std::string image_size = "1024x1024";
  std::vector<ViewAngle> default_views{{0, 0}, {180, 0}};
  std::string reference_method;

  /// Relative paths resolve against `base_dir`. Throws Error(config_error).
  static RunConfig from_json(const json& j, const fs::path& base_dir = {});
  static RunConfig load(const fs::path& path);
};

// ---------------------------------------------------------------------------
// runtime context

struct ContextOptions {
  fs::path mock_fixtures;  // non-empty selects the mock backend
  bool offline = false;    // serve only from the cache
  std::string bearer_token;
};

/// Owns the transport, cache and gateway for one run.
class Context {
 public:
  Context(RunConfig config, ContextOptions options = {});
  ~Context();

  Gateway& gateway() noexcept { return *gateway_; }
  ResponseCache& cache() noexcept { return *cache_; }
  const RunConfig& config() const noexcept { return config_; }
  RunConfig& mutable_config() noexcept { return config_; }
  /// Null unless the mock backend is active.
  MockTransport* mock() noexcept { return mock_; }

 private:
  RunConfig config_;
  std::unique_ptr<Transport> transport_;
  MockTransport* mock_ = nullptr;
  std::unique_ptr<ResponseCache> cache_;
  std::unique_ptr<Gateway> gateway_;
};

// ---------------------------------------------------------------------------
// batch execution

enum class BatchTask { caption2d, caption3d, clip, clip_image, winrate, judge };
std::string_view to_string(BatchTask t) noexcept;
BatchTask batch_task_from_string(std::string_view s);

/// Caption sources for the evaluation tasks. Each line carries item_id (or object_id) and a
/// caption ("caption", "final_caption" or "fused_caption"); the method is the line's
/// "method" field or the file stem, suffixed "/no_factcheck" for ablation records.
struct EvalInputs {
  std::vector<fs::path> captions;   // "ours"
  std::vector<fs::path> baselines;
};

struct BatchOptions {
  fs::path output;  // default: <output_dir>/<task>[.<variant>].jsonl
  EvalInputs eval;
};

struct BatchResult {
  fs::path output;
  int total = 0;
  int processed = 0;  // computed in this run
  int skipped = 0;    // reused from a previous run with the same config digest
  int failed = 0;     // lines carrying an error (or unjudged)
};

/// Digest over everything that determines an output line: task, variant, style, thresholds,
/// endpoint model ids and decoding parameters, and the prompt template checksum.
std::string config_digest(const RunConfig& config, BatchTask task);

/// Runs `task` with at most config.concurrency items in flight. Output lines are appended as
/// they complete and the file is rewritten in input order at the end. Lines already present
/// with a matching config digest and no error are kept (resume).
/// Throws Error(batch_failed) when every item failed; the output file is written regardless.
BatchResult run_batch(Context& ctx, const Manifest* manifest, BatchTask task, const BatchOptions& options = {});

struct CaptionRow {
  std::string item_id;
  std::string method_id;
  std::optional<std::string> caption;  // nullopt for failed records
};

std::vector<CaptionRow> load_captions(const fs::path& path);
/// Throws Error(schema_error) with the offending line.
std::vector<ScoreRow> load_score_rows(const fs::path& path);
std::vector<Judgment> load_judgments(const fs::path& path);

// ---------------------------------------------------------------------------
// reporting

struct ReportInputs {
  std::vector<fs::path> scores;
  std::vector<fs::path> judgments;
  std::vector<fs::path> votes;
  std::string reference_method;  // default: first method seen
};

struct Report {
  ordered_json data;
  std::string text;
};

/// "30.11 (-2.79)"-style cell; delta omitted when `reference` is null.
std::string format_with_delta(double mean, std::optional<double> reference);

Report build_report(const ReportInputs& inputs);
/// Writes report.json and report.txt into `out_dir`. Throws Error(empty_report).
Report write_report(const ReportInputs& inputs, const fs::path& out_dir);

}  // namespace vfc
