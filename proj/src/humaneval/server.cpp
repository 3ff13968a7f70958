#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "vfc/error.hpp"
#include "vfc/humaneval.hpp"

namespace vfc {
namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::no_tasks:
    case ErrorCode::unknown_task: return 404;
    case ErrorCode::duplicate_vote:
    case ErrorCode::not_served:
    case ErrorCode::task_closed: return 409;
    case ErrorCode::precondition:
    case ErrorCode::schema_error: return 400;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, const Error& e) {
  send_json(res, http_status(e.code()), ordered_json{{"error", to_string(e.code())}, {"message", e.what()}});
}

}  // namespace

struct HumanEvalServer::Impl {
  Impl(HumanEvalStore& s, HumanEvalServerOptions o) : store(s), options(std::move(o)) {}
  HumanEvalStore& store;
  HumanEvalServerOptions options;
  httplib::Server server;
  std::thread thread;
};

HumanEvalServer::HumanEvalServer(HumanEvalStore& store, HumanEvalServerOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {
  auto& svr = impl_->server;
  auto& st = impl_->store;

  svr.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, ordered_json{{"status", "ok"}});
  });

  svr.Get("/api/task", [&st](const httplib::Request& req, httplib::Response& res) {
    try {
      if (!req.has_param("rater")) fail(ErrorCode::precondition, "missing 'rater' query parameter");
      send_json(res, 200, st.next_task(req.get_param_value("rater")).to_json());
    } catch (const Error& e) {
      send_error(res, e);
    }
  });

  svr.Post("/api/vote", [&st](const httplib::Request& req, httplib::Response& res) {
    try {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception& e) {
        fail(ErrorCode::schema_error, std::string("vote body is not JSON: ") + e.what());
      }
      if (!body.is_object() || !body.contains("task_id") || !body.contains("rater_id") || !body.contains("choice") ||
          !body["task_id"].is_string() || !body["rater_id"].is_string() || !body["choice"].is_string())
        fail(ErrorCode::schema_error, "vote body needs string fields task_id, rater_id, choice");
      Vote v;
      v.task_id = body["task_id"].get<std::string>();
      v.rater_id = body["rater_id"].get<std::string>();
      v.choice = shown_choice_from_string(body["choice"].get<std::string>());
      st.submit_vote(v);
      send_json(res, 200, ordered_json{{"ok", true}});
    } catch (const Error& e) {
      send_error(res, e);
    }
  });

  svr.Get("/api/results", [&st](const httplib::Request&, httplib::Response& res) {
    try {
      ordered_json pairs = ordered_json::array();
      for (const auto& t : st.results()) pairs.push_back(t.to_json());
      send_json(res, 200, ordered_json{{"pairs", pairs}, {"votes", st.vote_count()}});
    } catch (const Error& e) {
      send_error(res, e);
    }
  });

  if (!impl_->options.images_dir.empty()) svr.set_mount_point("/images", impl_->options.images_dir.string());
  if (!impl_->options.static_dir.empty()) svr.set_mount_point("/", impl_->options.static_dir.string());
}

HumanEvalServer::~HumanEvalServer() { stop(); }

int HumanEvalServer::bind() {
  auto& svr = impl_->server;
  const auto& o = impl_->options;
  port_ = o.port == 0 ? svr.bind_to_any_port(o.host) : (svr.bind_to_port(o.host, o.port) ? o.port : -1);
  if (port_ < 0) fail(ErrorCode::io_error, "cannot bind " + o.host + ":" + std::to_string(o.port));
  spdlog::info("humaneval service listening on {}:{}", o.host, port_);
  return port_;
}

int HumanEvalServer::start() {
  bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void HumanEvalServer::run() {
  bind();
  impl_->server.listen_after_bind();
}

void HumanEvalServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace vfc
