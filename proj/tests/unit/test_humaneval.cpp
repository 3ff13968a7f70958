#include <algorithm>
#include <thread>

#include <httplib.h>

#include "doctest.h"
#include "support.hpp"
#include "vfc/error.hpp"
#include "vfc/humaneval.hpp"
#include "vfc/util.hpp"

using namespace vfc;

namespace {

namespace fs = std::filesystem;

std::vector<PairTask> make_tasks(int n, int required = 3) {
  std::vector<PairTask> out;
  for (int i = 0; i < n; ++i) {
    PairTask t;
    t.item_id = "img" + std::to_string(i);
    t.task_id = "task" + std::to_string(i);
    t.image = t.item_id + ".png";
    t.method_a = "methodAlpha";
    t.caption_a = "caption alpha " + std::to_string(i);
    t.method_b = "methodBeta";
    t.caption_b = "caption beta " + std::to_string(i);
    t.required_votes = required;
    out.push_back(t);
  }
  return out;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no vfc::Error thrown");
  return ErrorCode::precondition;
}

/// Shown choice that expresses a preference for method_a (or not) under `order`.
ShownChoice shown_for(bool prefers_a, DisplayOrder order) {
  bool first_is_a = order == DisplayOrder::ab;
  return prefers_a == first_is_a ? ShownChoice::first_shown : ShownChoice::second_shown;
}

bool same_tallies(const std::vector<PairTally>& a, const std::vector<PairTally>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].to_json() != b[i].to_json()) return false;
  return true;
}

}  // namespace

TEST_CASE("canonical_prefers_a truth table") {
  CHECK(canonical_prefers_a(ShownChoice::first_shown, DisplayOrder::ab));
  CHECK_FALSE(canonical_prefers_a(ShownChoice::second_shown, DisplayOrder::ab));
  CHECK_FALSE(canonical_prefers_a(ShownChoice::first_shown, DisplayOrder::ba));
  CHECK(canonical_prefers_a(ShownChoice::second_shown, DisplayOrder::ba));
  CHECK(shown_choice_from_string("second_shown") == ShownChoice::second_shown);
  CHECK_THROWS_AS(shown_choice_from_string("left"), Error);
}

TEST_CASE("tally: canonicalization makes results independent of display order") {
  auto gen = vfc_test::rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    int required = 1 + 2 * static_cast<int>(gen() % 3);
    std::vector<bool> prefs(static_cast<std::size_t>(required));
    for (auto&& p : prefs) p = gen() % 2;
    auto tally = [&](DisplayOrder order) {
      std::vector<json> events{json{{"type", "assign"}, {"task_id", "t"}, {"rater_id", "r0"},
                                    {"display_order", std::string(to_string(order))}, {"method_a", "ours"},
                                    {"method_b", "base"}, {"required_votes", required}}};
      for (int k = 0; k < required; ++k)
        events.push_back(json{{"type", "vote"}, {"task_id", "t"}, {"rater_id", "r" + std::to_string(k)},
                              {"choice", std::string(to_string(shown_for(prefs[k], order)))}});
      return tally_results(replay_events(events));
    };
    auto ab = tally(DisplayOrder::ab);
    auto ba = tally(DisplayOrder::ba);
    REQUIRE(ab.size() == 1);
    CHECK(same_tallies(ab, ba));
    int a_votes = static_cast<int>(std::count(prefs.begin(), prefs.end(), true));
    CHECK(ab[0].ours_preferred == (2 * a_votes > required ? 1 : 0));
    CHECK(ab[0].ours_preferred + ab[0].baseline_preferred == 1);
  }
}

TEST_CASE("store: simulated raters never push a task past its required votes") {
  auto gen = vfc_test::rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    vfc_test::TempDir tmp;
    int required = 1 + 2 * static_cast<int>(gen() % 3);
    HumanEvalStore store(make_tasks(6, required), tmp / "votes.jsonl", gen());
    std::vector<std::string> raters;
    for (int r = 0; r < 9; ++r) raters.push_back("rater" + std::to_string(r));
    std::map<std::string, std::string> pending;  // rater -> served task
    for (int step = 0; step < 200; ++step) {
      const auto& rater = raters[gen() % raters.size()];
      if (auto it = pending.find(rater); it != pending.end() && gen() % 2) {
        try {
          store.submit_vote({it->second, rater, gen() % 2 ? ShownChoice::first_shown : ShownChoice::second_shown, ""});
        } catch (const Error& e) {
          CHECK(e.code() == ErrorCode::task_closed);
        }
        pending.erase(it);
        continue;
      }
      try {
        pending[rater] = store.next_task(rater).task.task_id;
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::no_tasks);
      }
    }
    auto state = replay_events(read_event_log(tmp / "votes.jsonl"));
    for (const auto& [id, t] : state.tasks) {
      CHECK(static_cast<int>(t.votes.size()) <= required);
      std::set<std::string> voters;
      for (const auto& v : t.votes) CHECK(voters.insert(v.rater_id).second);
    }

    // results are a pure fold of the log
    HumanEvalStore reopened(make_tasks(6, required), tmp / "votes.jsonl", 0);
    CHECK(same_tallies(reopened.results(), store.results()));
    CHECK(same_tallies(tally_results(state, store.tasks()), store.results()));
    CHECK(reopened.vote_count() == store.vote_count());
  }
}

TEST_CASE("store: vote errors") {
  vfc_test::TempDir tmp;
  HumanEvalStore store(make_tasks(1, 1), tmp / "votes.jsonl", 3);
  CHECK(code_of([&] { store.submit_vote({"nope", "r1", ShownChoice::first_shown, ""}); }) == ErrorCode::unknown_task);
  auto task_id = make_tasks(1)[0].task_id;
  CHECK(code_of([&] { store.submit_vote({task_id, "r1", ShownChoice::first_shown, ""}); }) == ErrorCode::not_served);
  store.next_task("r1");
  store.next_task("r2");
  store.submit_vote({task_id, "r1", ShownChoice::first_shown, ""});
  CHECK(code_of([&] { store.submit_vote({task_id, "r1", ShownChoice::first_shown, ""}); }) == ErrorCode::duplicate_vote);
  CHECK(code_of([&] { store.submit_vote({task_id, "r2", ShownChoice::first_shown, ""}); }) == ErrorCode::task_closed);
  CHECK(code_of([&] { store.next_task("r3"); }) == ErrorCode::no_tasks);
  CHECK(code_of([&] { store.next_task(" "); }) == ErrorCode::precondition);
  CHECK(store.vote_count() == 1);
}

TEST_CASE("store: display order is drawn once per task and both orders occur") {
  HumanEvalStore store(make_tasks(40, 1), {}, 11);
  std::set<DisplayOrder> seen;
  for (int i = 0; i < 40; ++i) {
    auto rater = "rater" + std::to_string(i);
    auto p = store.next_task(rater);
    seen.insert(p.order);
    auto again = store.next_task(rater);
    CHECK(again.order == p.order);
    CHECK(again.task.task_id == p.task.task_id);
    store.submit_vote({p.task.task_id, rater, ShownChoice::first_shown, ""});
  }
  CHECK(seen.size() == 2);
}

TEST_CASE("payload: captions in display order, no method ids") {
  TaskPayload p{make_tasks(1)[0], DisplayOrder::ba, 1};
  auto j = p.to_json();
  CHECK(j["captions"][0] == "caption beta 0");
  CHECK(j["captions"][1] == "caption alpha 0");
  CHECK(j["image_url"] == "/images/img0.png");
  CHECK(j["instruction"] == std::string(kRaterInstruction));
  auto clean = j.dump();
  CHECK(clean.find("methodAlpha") == std::string::npos);
  CHECK(clean.find("methodBeta") == std::string::npos);
  CHECK(clean.find("method_a") == std::string::npos);
  PairTask remote = make_tasks(1)[0];
  remote.image = "https://example.org/x.png";
  CHECK(TaskPayload{remote, DisplayOrder::ab, 0}.to_json()["image_url"] == "https://example.org/x.png");
}

TEST_CASE("event log: torn final line is dropped, other corruption is an error") {
  vfc_test::TempDir tmp;
  std::string good = json{{"type", "assign"}, {"task_id", "t"}, {"rater_id", "r"}, {"display_order", "AB"}}.dump();
  vfc_test::spit(tmp / "torn.jsonl", good + "\n{\"type\": \"vo");
  CHECK(read_event_log(tmp / "torn.jsonl").size() == 1);
  vfc_test::spit(tmp / "bad.jsonl", "garbage\n" + good + "\n");
  CHECK(code_of([&] { read_event_log(tmp / "bad.jsonl"); }) == ErrorCode::schema_error);
  CHECK(read_event_log(tmp / "absent.jsonl").empty());
  CHECK(code_of([&] { replay_events({json{{"type", "teleport"}, {"task_id", "t"}}}); }) == ErrorCode::schema_error);
}

TEST_CASE("load_pairs: defaults and validation") {
  vfc_test::TempDir tmp;
  vfc_test::spit(tmp / "p.jsonl",
                 "{\"item_id\": \"a\", \"method_a\": \"ours\", \"caption_a\": \"x\", \"method_b\": \"b\", \"caption_b\": \"y\"}\n");
  auto pairs = load_pairs(tmp / "p.jsonl");
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].task_id.rfind("t-", 0) == 0);
  CHECK(pairs[0].task_id.find("ours") == std::string::npos);
  CHECK(pairs[0].required_votes == 3);
  vfc_test::spit(tmp / "even.jsonl",
                 "{\"item_id\": \"a\", \"method_a\": \"o\", \"caption_a\": \"x\", \"method_b\": \"b\", \"caption_b\": \"y\", "
                 "\"required_votes\": 2}\n");
  CHECK(code_of([&] { load_pairs(tmp / "even.jsonl"); }) == ErrorCode::schema_error);
  auto line = std::string(
      "{\"item_id\": \"a\", \"method_a\": \"o\", \"caption_a\": \"x\", \"method_b\": \"b\", \"caption_b\": \"y\"}\n");
  vfc_test::spit(tmp / "dup.jsonl", line + line);
  CHECK(code_of([&] { load_pairs(tmp / "dup.jsonl"); }) == ErrorCode::duplicate_ids);
  vfc_test::spit(tmp / "missing.jsonl", "{\"item_id\": \"a\"}\n");
  CHECK(code_of([&] { load_pairs(tmp / "missing.jsonl"); }) == ErrorCode::schema_error);
}

TEST_CASE("REST interface") {
  vfc_test::TempDir tmp;
  vfc_test::spit(tmp / "images" / "img0.png", "PNGDATA");
  vfc_test::spit(tmp / "ui" / "index.html", "<html></html>");
  auto tasks = make_tasks(2, 1);
  tasks[0].task_id = "t0";
  tasks[1].task_id = "t1";
  HumanEvalStore store(tasks, tmp / "votes.jsonl", 5);
  HumanEvalServerOptions opts;
  opts.images_dir = tmp / "images";
  opts.static_dir = tmp / "ui";
  HumanEvalServer server(store, opts);
  int port = server.start();
  REQUIRE(port > 0);
  httplib::Client cli("127.0.0.1", port);

  auto health = cli.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body)["status"] == "ok");

  CHECK(cli.Get("/api/task")->status == 400);
  auto task = cli.Get("/api/task?rater=ann");
  REQUIRE(task);
  CHECK(task->status == 200);
  auto payload = json::parse(task->body);
  CHECK(payload["task_id"] == "t0");
  CHECK(task->body.find("methodAlpha") == std::string::npos);
  CHECK(task->body.find("methodBeta") == std::string::npos);
  CHECK(payload["captions"].size() == 2);

  auto vote = [&](const std::string& task_id, const std::string& rater, const std::string& choice) {
    return cli.Post("/api/vote", json{{"task_id", task_id}, {"rater_id", rater}, {"choice", choice}}.dump(),
                    "application/json");
  };
  CHECK(vote("t0", "ann", "first_shown")->status == 200);
  auto dup = vote("t0", "ann", "first_shown");
  CHECK(dup->status == 409);
  CHECK(json::parse(dup->body)["error"] == "DuplicateVote");
  CHECK(vote("t1", "ann", "first_shown")->status == 409);  // never served
  CHECK(vote("zzz", "ann", "first_shown")->status == 404);
  CHECK(vote("t0", "bob", "sideways")->status == 400);
  CHECK(cli.Post("/api/vote", "{not json", "application/json")->status == 400);
  CHECK(cli.Post("/api/vote", json{{"task_id", "t0"}}.dump(), "application/json")->status == 400);

  // t0 is closed with one vote, so bob gets t1, then nothing
  auto next = cli.Get("/api/task?rater=bob");
  CHECK(json::parse(next->body)["task_id"] == "t1");
  CHECK(vote("t0", "bob", "first_shown")->status == 409);
  CHECK(vote("t1", "bob", "second_shown")->status == 200);
  CHECK(cli.Get("/api/task?rater=cyd")->status == 404);

  auto results = cli.Get("/api/results");
  REQUIRE(results);
  auto r = json::parse(results->body);
  CHECK(r["votes"] == 2);
  REQUIRE(r["pairs"].size() == 1);
  CHECK(r["pairs"][0]["ours_preferred"].get<int>() + r["pairs"][0]["baseline_preferred"].get<int>() == 2);
  CHECK(same_tallies(store.results(), tally_results(replay_events(read_event_log(tmp / "votes.jsonl")), tasks)));

  auto img = cli.Get("/images/img0.png");
  REQUIRE(img);
  CHECK(img->body == "PNGDATA");
  auto index = cli.Get("/index.html");
  REQUIRE(index);
  CHECK(index->status == 200);
  server.stop();
}

TEST_CASE("REST interface: concurrent raters") {
  vfc_test::TempDir tmp;
  HumanEvalStore store(make_tasks(5, 3), tmp / "votes.jsonl", 9);
  HumanEvalServer server(store, {});
  int port = server.start();
  std::vector<std::thread> raters;
  for (int r = 0; r < 8; ++r)
    raters.emplace_back([port, r] {
      httplib::Client cli("127.0.0.1", port);
      std::string rater = "r" + std::to_string(r);
      for (int round = 0; round < 10; ++round) {
        auto t = cli.Get(("/api/task?rater=" + rater).c_str());
        if (!t || t->status != 200) break;
        auto id = json::parse(t->body)["task_id"].get<std::string>();
        cli.Post("/api/vote", json{{"task_id", id}, {"rater_id", rater}, {"choice", "first_shown"}}.dump(),
                 "application/json");
      }
    });
  for (auto& t : raters) t.join();
  server.stop();
  auto state = replay_events(read_event_log(tmp / "votes.jsonl"));
  std::size_t total = 0;
  for (const auto& [id, t] : state.tasks) {
    CHECK(t.votes.size() <= 3u);
    total += t.votes.size();
  }
  CHECK(total == 15);  // 8 raters are enough to close every task
  CHECK(store.vote_count() == total);
}
