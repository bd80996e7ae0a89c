#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace slr {

/// Machine-readable failure categories. Every error surfaced by the library,
/// the HTTP service and the CLI carries exactly one of these.
enum class ErrorCode {
  parse_error,
  validation_error,
  schema_error,
  empty_document,
  precondition_failed,
  transport_error,
  extraction_error,
  replay_miss,
  scripting_error,
  persistence_error,
  range_error,
  duplicate_entry,
  length_mismatch,
  undefined_metric,
  insufficient_data,
  file_not_found,
  unsupported_media_type,
  invalid_request,
  run_not_found,
  session_not_found,
  not_ready,
  session_busy,
  unauthorized,
  extractor_unavailable,
  internal_error,
};

std::string_view code_name(ErrorCode code);
std::optional<ErrorCode> parse_code(std::string_view name);

/// HTTP status the service answers with for a given code.
int http_status(ErrorCode code);

/// Process exit status the CLI uses for a given code (never 0).
int exit_status(ErrorCode code);

/// Transport, replay and scripting failures mean the model backend itself is
/// unusable, as opposed to a model answer that failed validation.
bool is_infrastructure(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, nlohmann::json details = nullptr)
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }
  const nlohmann::json& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  nlohmann::json details_;
};

/// {"error": {"code", "message", "details"}} as served by the HTTP API.
nlohmann::json to_api_error(const Error& error);

}  // namespace slr
