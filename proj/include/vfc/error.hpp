#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vfc {

enum class ErrorCode {
  precondition,
  retriable_exhausted,
  endpoint_error,
  malformed_response,
  image_load_error,
  dimension_error,
  generation_refused,
  cache_corrupt,
  unknown_template,
  slot_arity,
  empty_checklist,
  missing_marker,
  no_questions,
  incomplete_judgment,
  proposal_failed,
  vqa_failed,
  pipeline_failed,
  degenerate_vector,
  alignment_error,
  config_error,
  missing_files,
  duplicate_ids,
  schema_error,
  batch_failed,
  empty_report,
  no_tasks,
  duplicate_vote,
  unknown_task,
  not_served,
  task_closed,
  io_error,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Non-2xx reply from a model endpoint.
class EndpointError : public Error {
 public:
  EndpointError(int status, std::string body_excerpt)
      : Error(ErrorCode::endpoint_error,
              "endpoint returned HTTP " + std::to_string(status) + ": " + body_excerpt),
        status_(status),
        excerpt_(std::move(body_excerpt)) {}

  int status() const noexcept { return status_; }
  const std::string& body_excerpt() const noexcept { return excerpt_; }

 private:
  int status_;
  std::string excerpt_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::precondition, message);
}

}  // namespace vfc
