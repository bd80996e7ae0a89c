#include "slr/errors.hpp"

namespace slr {

std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::validation_error: return "validation_error";
    case ErrorCode::schema_error: return "schema_error";
    case ErrorCode::empty_document: return "empty_document";
    case ErrorCode::precondition_failed: return "precondition_failed";
    case ErrorCode::transport_error: return "transport_error";
    case ErrorCode::extraction_error: return "extraction_error";
    case ErrorCode::replay_miss: return "replay_miss";
    case ErrorCode::scripting_error: return "scripting_error";
    case ErrorCode::persistence_error: return "persistence_error";
    case ErrorCode::range_error: return "range_error";
    case ErrorCode::duplicate_entry: return "duplicate_entry";
    case ErrorCode::length_mismatch: return "length_mismatch";
    case ErrorCode::undefined_metric: return "undefined_metric";
    case ErrorCode::insufficient_data: return "insufficient_data";
    case ErrorCode::file_not_found: return "file_not_found";
    case ErrorCode::unsupported_media_type: return "unsupported_media_type";
    case ErrorCode::invalid_request: return "invalid_request";
    case ErrorCode::run_not_found: return "run_not_found";
    case ErrorCode::session_not_found: return "session_not_found";
    case ErrorCode::not_ready: return "not_ready";
    case ErrorCode::session_busy: return "session_busy";
    case ErrorCode::unauthorized: return "unauthorized";
    case ErrorCode::extractor_unavailable: return "extractor_unavailable";
    case ErrorCode::internal_error: return "internal_error";
  }
  return "internal_error";
}

std::optional<ErrorCode> parse_code(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::internal_error); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    if (code_name(code) == name) return code;
  }
  return std::nullopt;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse_error:
    case ErrorCode::validation_error:
    case ErrorCode::schema_error:
    case ErrorCode::empty_document:
    case ErrorCode::precondition_failed:
    case ErrorCode::range_error:
    case ErrorCode::duplicate_entry:
    case ErrorCode::length_mismatch:
    case ErrorCode::invalid_request:
      return 400;
    case ErrorCode::unauthorized: return 401;
    case ErrorCode::file_not_found:
    case ErrorCode::run_not_found:
    case ErrorCode::session_not_found:
      return 404;
    case ErrorCode::not_ready:
    case ErrorCode::session_busy:
      return 409;
    case ErrorCode::unsupported_media_type: return 415;
    case ErrorCode::undefined_metric:
    case ErrorCode::insufficient_data:
    case ErrorCode::extraction_error:
      return 422;
    case ErrorCode::transport_error:
    case ErrorCode::replay_miss:
      return 502;
    case ErrorCode::extractor_unavailable: return 503;
    case ErrorCode::scripting_error:
    case ErrorCode::persistence_error:
    case ErrorCode::internal_error:
      return 500;
  }
  return 500;
}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::file_not_found: return 3;
    case ErrorCode::parse_error:
    case ErrorCode::schema_error:
    case ErrorCode::validation_error:
      return 4;
    case ErrorCode::empty_document: return 5;
    case ErrorCode::unsupported_media_type: return 6;
    case ErrorCode::transport_error:
    case ErrorCode::extractor_unavailable:
      return 7;
    case ErrorCode::replay_miss: return 8;
    case ErrorCode::run_not_found:
    case ErrorCode::session_not_found:
      return 9;
    case ErrorCode::not_ready: return 10;
    case ErrorCode::persistence_error: return 11;
    case ErrorCode::range_error:
    case ErrorCode::duplicate_entry:
    case ErrorCode::length_mismatch:
      return 12;
    case ErrorCode::undefined_metric:
    case ErrorCode::insufficient_data:
      return 13;
    default: return 1;
  }
}

bool is_infrastructure(ErrorCode code) {
  return code == ErrorCode::transport_error || code == ErrorCode::replay_miss ||
         code == ErrorCode::scripting_error;
}

nlohmann::json to_api_error(const Error& error) {
  return {{"error",
           {{"code", std::string(code_name(error.code()))},
            {"message", error.what()},
            {"details", error.details()}}}};
}

}  // namespace slr
