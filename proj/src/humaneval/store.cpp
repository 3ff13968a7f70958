#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>

#include <spdlog/spdlog.h>

#include "vfc/error.hpp"
#include "vfc/humaneval.hpp"
#include "vfc/metrics.hpp"
#include "vfc/util.hpp"

namespace vfc {
namespace {

std::string utc_now() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

DisplayOrder order_from_string(const std::string& s) {
  if (s == "AB") return DisplayOrder::ab;
  if (s == "BA") return DisplayOrder::ba;
  fail(ErrorCode::schema_error, "unknown display order '" + s + "'");
}

}  // namespace

std::string_view to_string(DisplayOrder o) noexcept { return o == DisplayOrder::ab ? "AB" : "BA"; }

std::string_view to_string(ShownChoice c) noexcept {
  return c == ShownChoice::first_shown ? "first_shown" : "second_shown";
}

ShownChoice shown_choice_from_string(std::string_view s) {
  if (s == "first_shown") return ShownChoice::first_shown;
  if (s == "second_shown") return ShownChoice::second_shown;
  fail(ErrorCode::schema_error, "choice must be first_shown or second_shown, got '" + std::string(s) + "'");
}

bool canonical_prefers_a(ShownChoice choice, DisplayOrder order) noexcept {
  return (choice == ShownChoice::first_shown) == (order == DisplayOrder::ab);
}

std::vector<PairTask> load_pairs(const std::filesystem::path& path) {
  std::vector<PairTask> out;
  std::set<std::string> seen;
  std::vector<std::string> dups;
  int line_no = 0;
  for (const auto& line : split(read_file(path), '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      PairTask t;
      t.item_id = j.at("item_id").get<std::string>();
      t.image = j.value("image", "");
      t.method_a = j.at("method_a").get<std::string>();
      t.caption_a = j.at("caption_a").get<std::string>();
      t.method_b = j.at("method_b").get<std::string>();
      t.caption_b = j.at("caption_b").get<std::string>();
      t.required_votes = j.value("required_votes", 3);
      // default ids are opaque so the rater payload never names a method
      t.task_id = j.value("task_id", "t-" + sha256_hex(t.item_id + "\n" + t.method_a + "\n" + t.method_b).substr(0, 16));
      if (t.required_votes < 1 || t.required_votes % 2 == 0)
        fail(ErrorCode::schema_error, "required_votes must be a positive odd number");
      if (!seen.insert(t.task_id).second) dups.push_back(t.task_id);
      out.push_back(std::move(t));
    } catch (const json::exception& e) {
      fail(ErrorCode::schema_error, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::schema_error) throw;
      fail(ErrorCode::schema_error, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!dups.empty()) fail(ErrorCode::duplicate_ids, "duplicate task ids: " + join(dups, ", "));
  return out;
}

ordered_json PairTally::to_json() const {
  return ordered_json{{"method_a", method_a},
                      {"method_b", method_b},
                      {"ours_preferred", ours_preferred},
                      {"baseline_preferred", baseline_preferred},
                      {"open_tasks", open_tasks}};
}

EventLogState replay_events(const std::vector<json>& events) {
  EventLogState st;
  for (const auto& e : events) {
    try {
      auto type = e.at("type").get<std::string>();
      auto& t = st.tasks[e.at("task_id").get<std::string>()];
      if (type == "assign") {
        auto order = order_from_string(e.at("display_order").get<std::string>());
        if (!t.order) t.order = order;
        t.method_a = e.value("method_a", t.method_a);
        t.method_b = e.value("method_b", t.method_b);
        t.required_votes = e.value("required_votes", t.required_votes);
        t.served_to.insert(e.at("rater_id").get<std::string>());
      } else if (type == "vote") {
        Vote v;
        v.task_id = e.at("task_id").get<std::string>();
        v.rater_id = e.at("rater_id").get<std::string>();
        v.choice = shown_choice_from_string(e.at("choice").get<std::string>());
        v.submitted_at = e.value("submitted_at", "");
        t.votes.push_back(std::move(v));
      } else {
        fail(ErrorCode::schema_error, "unknown event type '" + type + "'");
      }
    } catch (const json::exception& ex) {
      fail(ErrorCode::schema_error, std::string("vote log event: ") + ex.what());
    }
  }
  return st;
}

std::vector<json> read_event_log(const std::filesystem::path& path) {
  std::vector<json> out;
  if (!std::filesystem::exists(path)) return out;
  auto lines = split(read_file(path), '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      out.push_back(json::parse(lines[i]));
    } catch (const json::exception&) {
      // a torn final line from an interrupted append is dropped, anything else is corruption
      if (i + 1 == lines.size() || (i + 2 == lines.size() && trim(lines.back()).empty())) {
        spdlog::warn("dropping torn final line of {}", path.string());
        continue;
      }
      fail(ErrorCode::schema_error, path.string() + ":" + std::to_string(i + 1) + ": unparseable event");
    }
  }
  return out;
}

std::vector<PairTally> tally_results(const EventLogState& state, const std::vector<PairTask>& tasks) {
  struct Row {
    std::string task_id, method_a, method_b;
    int required;
  };
  std::vector<Row> rows;
  if (!tasks.empty()) {
    for (const auto& t : tasks) rows.push_back({t.task_id, t.method_a, t.method_b, t.required_votes});
  } else {
    for (const auto& [id, t] : state.tasks) rows.push_back({id, t.method_a, t.method_b, t.required_votes});
  }

  std::vector<PairTally> out;
  auto slot = [&](const std::string& a, const std::string& b) -> PairTally& {
    for (auto& p : out)
      if (p.method_a == a && p.method_b == b) return p;
    out.push_back({a, b, 0, 0, 0});
    return out.back();
  };
  for (const auto& r : rows) {
    auto& tally = slot(r.method_a, r.method_b);
    auto it = state.tasks.find(r.task_id);
    if (it == state.tasks.end() || !it->second.order || static_cast<int>(it->second.votes.size()) < r.required) {
      ++tally.open_tasks;
      continue;
    }
    std::vector<Pick> picks;
    for (int k = 0; k < r.required; ++k)
      picks.push_back(canonical_prefers_a(it->second.votes[k].choice, *it->second.order) ? Pick::a : Pick::b);
    if (aggregate_majority(picks, r.required) == Pick::a)
      ++tally.ours_preferred;
    else
      ++tally.baseline_preferred;
  }
  return out;
}

ordered_json TaskPayload::to_json(const std::string& image_prefix) const {
  bool is_url = task.image.rfind("http://", 0) == 0 || task.image.rfind("https://", 0) == 0 ||
                task.image.rfind("data:", 0) == 0;
  const auto& first = order == DisplayOrder::ab ? task.caption_a : task.caption_b;
  const auto& second = order == DisplayOrder::ab ? task.caption_b : task.caption_a;
  return ordered_json{{"task_id", task.task_id},
                      {"item_id", task.item_id},
                      {"image_url", is_url || task.image.empty() ? task.image : image_prefix + task.image},
                      {"captions", {first, second}},
                      {"instruction", kRaterInstruction},
                      {"votes", votes},
                      {"required_votes", task.required_votes}};
}

HumanEvalStore::HumanEvalStore(std::vector<PairTask> tasks, std::filesystem::path log_path, std::uint64_t seed)
    : tasks_(std::move(tasks)), log_path_(std::move(log_path)), seed_(seed) {
  for (std::size_t i = 0; i < tasks_.size(); ++i) index_[tasks_[i].task_id] = i;
  if (!log_path_.empty()) state_ = replay_events(read_event_log(log_path_));
}

DisplayOrder HumanEvalStore::draw_order(const std::string& task_id) const {
  auto digest = sha256_hex(std::to_string(seed_) + ":" + task_id);
  int low = std::stoi(digest.substr(digest.size() - 1), nullptr, 16);
  return (low & 1) ? DisplayOrder::ba : DisplayOrder::ab;
}

void HumanEvalStore::append(const json& event) {
  if (log_path_.empty()) return;
  if (log_path_.has_parent_path()) std::filesystem::create_directories(log_path_.parent_path());
  std::ofstream out(log_path_, std::ios::app | std::ios::binary);
  out << event.dump() << '\n';
  out.flush();
  if (!out) fail(ErrorCode::io_error, "cannot append to vote log " + log_path_.string());
}

TaskPayload HumanEvalStore::next_task(const std::string& rater_id) {
  require(!trim(rater_id).empty(), "next_task: rater id must be non-empty");
  std::lock_guard lock(mutex_);
  const PairTask* best = nullptr;
  std::size_t best_votes = 0;
  for (const auto& t : tasks_) {
    std::size_t votes = 0;
    bool voted = false;
    if (auto it = state_.tasks.find(t.task_id); it != state_.tasks.end()) {
      votes = it->second.votes.size();
      for (const auto& v : it->second.votes) voted |= v.rater_id == rater_id;
    }
    if (voted || static_cast<int>(votes) >= t.required_votes) continue;
    if (!best || votes < best_votes) {
      best = &t;
      best_votes = votes;
    }
  }
  if (!best) fail(ErrorCode::no_tasks, "no open tasks for rater '" + rater_id + "'");

  auto& st = state_.tasks[best->task_id];
  if (!st.order || !st.served_to.count(rater_id)) {
    DisplayOrder order = st.order ? *st.order : draw_order(best->task_id);
    append(json{{"type", "assign"},
                {"task_id", best->task_id},
                {"rater_id", rater_id},
                {"display_order", to_string(order)},
                {"method_a", best->method_a},
                {"method_b", best->method_b},
                {"required_votes", best->required_votes},
                {"at", utc_now()}});
    st.order = order;
    st.method_a = best->method_a;
    st.method_b = best->method_b;
    st.required_votes = best->required_votes;
    st.served_to.insert(rater_id);
  }
  return TaskPayload{*best, *st.order, static_cast<int>(st.votes.size())};
}

void HumanEvalStore::submit_vote(Vote vote) {
  std::lock_guard lock(mutex_);
  auto idx = index_.find(vote.task_id);
  if (idx == index_.end()) fail(ErrorCode::unknown_task, "unknown task '" + vote.task_id + "'");
  const auto& task = tasks_[idx->second];
  auto& st = state_.tasks[vote.task_id];
  for (const auto& v : st.votes)
    if (v.rater_id == vote.rater_id)
      fail(ErrorCode::duplicate_vote, "rater '" + vote.rater_id + "' already voted on '" + vote.task_id + "'");
  if (!st.order || !st.served_to.count(vote.rater_id))
    fail(ErrorCode::not_served, "task '" + vote.task_id + "' was never served to rater '" + vote.rater_id + "'");
  if (static_cast<int>(st.votes.size()) >= task.required_votes)
    fail(ErrorCode::task_closed, "task '" + vote.task_id + "' already has its votes");
  if (vote.submitted_at.empty()) vote.submitted_at = utc_now();
  append(json{{"type", "vote"},
              {"task_id", vote.task_id},
              {"rater_id", vote.rater_id},
              {"choice", to_string(vote.choice)},
              {"submitted_at", vote.submitted_at}});
  st.votes.push_back(std::move(vote));
}

std::vector<PairTally> HumanEvalStore::results() const {
  std::lock_guard lock(mutex_);
  return tally_results(state_, tasks_);
}

std::size_t HumanEvalStore::vote_count() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& [id, t] : state_.tasks) n += t.votes.size();
  return n;
}

}  // namespace vfc
