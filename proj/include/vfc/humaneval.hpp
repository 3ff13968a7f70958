#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vfc/types.hpp"

namespace vfc {

/// Instruction shown to raters with every task.
inline constexpr std::string_view kRaterInstruction =
    "Select the better caption describing the image based on 3 aspects: correctness, detailness, and fluency.";

enum class DisplayOrder { ab, ba };
enum class ShownChoice { first_shown, second_shown };

std::string_view to_string(DisplayOrder o) noexcept;
std::string_view to_string(ShownChoice c) noexcept;
/// Throws Error(schema_error).
ShownChoice shown_choice_from_string(std::string_view s);

/// One pairwise comparison. By convention method_a is "ours" and method_b the baseline.
struct PairTask {
  std::string task_id;
  std::string item_id;
  std::string image;  // URL, or a path relative to the served image directory
  std::string method_a;
  std::string caption_a;
  std::string method_b;
  std::string caption_b;
  int required_votes = 3;
};

/// Reads a pairs JSONL file. task_id defaults to an opaque digest of (item_id, method_a, method_b).
/// Throws Error(schema_error) or Error(duplicate_ids).
std::vector<PairTask> load_pairs(const std::filesystem::path& path);

struct Vote {
  std::string task_id;
  std::string rater_id;
  ShownChoice choice = ShownChoice::first_shown;
  std::string submitted_at;
};

/// Vote in method coordinates: true when method_a was preferred.
bool canonical_prefers_a(ShownChoice choice, DisplayOrder order) noexcept;

struct PairTally {
  std::string method_a;
  std::string method_b;
  int ours_preferred = 0;      // closed tasks whose majority chose method_a
  int baseline_preferred = 0;  // closed tasks whose majority chose method_b
  int open_tasks = 0;

  ordered_json to_json() const;
};

/// State recovered by folding the event log.
struct EventLogState {
  struct TaskState {
    std::optional<DisplayOrder> order;
    std::string method_a;
    std::string method_b;
    int required_votes = 3;
    std::set<std::string> served_to;
    std::vector<Vote> votes;
  };
  std::map<std::string, TaskState> tasks;
};

/// Folds assign/vote events in order. Throws Error(schema_error) for unparseable events.
EventLogState replay_events(const std::vector<json>& events);
std::vector<json> read_event_log(const std::filesystem::path& path);

/// Majority tallies per (method_a, method_b) over closed tasks. `tasks` supplies tasks that
/// may never have been served; pass empty to use only what the log knows.
std::vector<PairTally> tally_results(const EventLogState& state, const std::vector<PairTask>& tasks = {});

struct TaskPayload {
  PairTask task;
  DisplayOrder order = DisplayOrder::ab;
  int votes = 0;

  /// What the rater sees: captions in display order, no method ids.
  ordered_json to_json(const std::string& image_prefix = "/images/") const;
};

/// Durable pairwise-vote store backed by an append-only JSONL event log.
class HumanEvalStore {
 public:
  /// Replays `log_path` when it exists. `seed` drives the display-order draw.
  HumanEvalStore(std::vector<PairTask> tasks, std::filesystem::path log_path, std::uint64_t seed = 0);

  /// Least-voted open task this rater has not voted on. Throws Error(no_tasks).
  TaskPayload next_task(const std::string& rater_id);

  /// Throws unknown_task, duplicate_vote, not_served (never shown to this rater) or task_closed.
  void submit_vote(Vote vote);

  std::vector<PairTally> results() const;
  std::size_t vote_count() const;
  const std::vector<PairTask>& tasks() const noexcept { return tasks_; }

 private:
  void append(const json& event);
  DisplayOrder draw_order(const std::string& task_id) const;

  std::vector<PairTask> tasks_;
  std::map<std::string, std::size_t> index_;
  std::filesystem::path log_path_;
  std::uint64_t seed_;
  mutable std::mutex mutex_;
  EventLogState state_;
};

struct HumanEvalServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 = any free port
  std::filesystem::path static_dir;  // UI bundle, mounted at /
  std::filesystem::path images_dir;  // mounted at /images
};

/// REST front end: GET /api/task?rater=ID, POST /api/vote, GET /api/results, GET /healthz.
class HumanEvalServer {
 public:
  HumanEvalServer(HumanEvalStore& store, HumanEvalServerOptions options);
  ~HumanEvalServer();

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Binds and blocks serving on the calling thread until stop() is called elsewhere.
  void run();
  void stop();
  int port() const noexcept { return port_; }

 private:
  int bind();

  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace vfc
