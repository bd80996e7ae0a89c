#pragma once

#include <memory>
#include <semaphore>
#include <string>
#include <string_view>

#include "slr/clock.hpp"
#include "slr/document.hpp"
#include "slr/http.hpp"

namespace slr {

struct ExtractorConfig {
  std::string url;  ///< full endpoint URL; empty means no extractor configured
  int timeout_s = 120;
  int max_retries = 2;
  int max_connections = 4;
  http::Backoff backoff{1000, 2.0, 16000};
};

/// Client for the external OCR / vision extraction service. The service takes
/// the raw PDF as the POST body and answers with a structured-document JSON.
class RemoteExtractor {
 public:
  RemoteExtractor(ExtractorConfig config, http::Client& client, Clock& clock);

  /// Empty input raises precondition_failed without touching the network.
  /// Exhausted retries raise transport_error (details.retriable = true); an
  /// unusable body raises extraction_error carrying the payload.
  ParsedDocument extract(std::string_view pdf_bytes);

  const ExtractorConfig& config() const { return config_; }

 private:
  ExtractorConfig config_;
  http::Client& client_;
  Clock& clock_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
};

}  // namespace slr
