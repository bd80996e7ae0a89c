#include "slr/extractor.hpp"

#include <algorithm>

#include "slr/errors.hpp"
#include "slr/hashing.hpp"

namespace slr {

RemoteExtractor::RemoteExtractor(ExtractorConfig config, http::Client& client, Clock& clock)
    : config_(std::move(config)),
      client_(client),
      clock_(clock),
      slots_(std::make_unique<std::counting_semaphore<>>(std::max(1, config_.max_connections))) {}

ParsedDocument RemoteExtractor::extract(std::string_view pdf_bytes) {
  if (pdf_bytes.empty()) throw Error(ErrorCode::precondition_failed, "empty PDF upload");
  if (config_.url.empty()) throw Error(ErrorCode::extractor_unavailable, "no extractor.url configured");

  const std::string body(pdf_bytes);
  const http::RetryPolicy policy{config_.max_retries, config_.backoff};
  http::RetryOutcome outcome;
  {
    slots_->acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{*slots_};
    outcome = http::send_with_retry(policy, clock_, [&] {
      return client_.post(config_.url, body, "application/pdf", {{"Accept", "application/json"}});
    });
  }

  const auto& response = outcome.response;
  if (!response.ok()) {
    throw Error(ErrorCode::transport_error,
                "extractor request failed after " + std::to_string(outcome.attempts) + " attempt(s): " +
                    (response.status ? "HTTP " + std::to_string(response.status) : response.error),
                {{"status", response.status}, {"attempts", outcome.attempts}, {"retriable", true}});
  }

  nlohmann::json payload;
  try {
    payload = nlohmann::json::parse(response.body);
  } catch (const nlohmann::json::parse_error&) {
    throw Error(ErrorCode::extraction_error, "extractor returned a non-JSON body", {{"payload", response.body}});
  }
  try {
    auto doc = map_structured(payload, pdf_bytes, SourceKind::RemoteExtracted);
    return doc;
  } catch (const Error& e) {
    throw Error(ErrorCode::extraction_error, std::string("extractor response unusable: ") + e.what(),
                {{"payload", response.body}, {"cause", e.details()}});
  }
}

}  // namespace slr
