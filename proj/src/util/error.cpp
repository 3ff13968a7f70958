#include "vfc/error.hpp"

namespace vfc {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::precondition: return "PreconditionViolation";
    case ErrorCode::retriable_exhausted: return "RetriableExhausted";
    case ErrorCode::endpoint_error: return "EndpointError";
    case ErrorCode::malformed_response: return "MalformedResponse";
    case ErrorCode::image_load_error: return "ImageLoadError";
    case ErrorCode::dimension_error: return "DimensionError";
    case ErrorCode::generation_refused: return "GenerationRefused";
    case ErrorCode::cache_corrupt: return "CacheCorrupt";
    case ErrorCode::unknown_template: return "UnknownTemplate";
    case ErrorCode::slot_arity: return "SlotArityError";
    case ErrorCode::empty_checklist: return "EmptyChecklist";
    case ErrorCode::missing_marker: return "MissingMarker";
    case ErrorCode::no_questions: return "NoQuestions";
    case ErrorCode::incomplete_judgment: return "IncompleteJudgment";
    case ErrorCode::proposal_failed: return "ProposalFailed";
    case ErrorCode::vqa_failed: return "VqaFailed";
    case ErrorCode::pipeline_failed: return "PipelineFailed";
    case ErrorCode::degenerate_vector: return "DegenerateVector";
    case ErrorCode::alignment_error: return "AlignmentError";
    case ErrorCode::config_error: return "ConfigError";
    case ErrorCode::missing_files: return "MissingFiles";
    case ErrorCode::duplicate_ids: return "DuplicateIds";
    case ErrorCode::schema_error: return "SchemaError";
    case ErrorCode::batch_failed: return "BatchFailed";
    case ErrorCode::empty_report: return "EmptyReport";
    case ErrorCode::no_tasks: return "NoTasks";
    case ErrorCode::duplicate_vote: return "DuplicateVote";
    case ErrorCode::unknown_task: return "UnknownTask";
    case ErrorCode::not_served: return "NotServed";
    case ErrorCode::task_closed: return "TaskClosed";
    case ErrorCode::io_error: return "IoError";
  }
  return "Unknown";
}

}  // namespace vfc
