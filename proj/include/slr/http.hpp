#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <string>

#include "slr/clock.hpp"

namespace slr::http {

using Headers = std::multimap<std::string, std::string>;

struct Response {
  int status = 0;  ///< 0 when the request never produced an HTTP response
  std::string body;
  std::string error;  ///< transport failure description when status == 0
  std::string retry_after;

  bool ok() const { return status >= 200 && status < 300; }
};

/// Outbound HTTP. Implementations must be safe to call concurrently.
class Client {
 public:
  virtual ~Client() = default;
  virtual Response get(const std::string& url, const Headers& headers = {}) = 0;
  virtual Response post(const std::string& url, const std::string& body,
                        const std::string& content_type, const Headers& headers = {}) = 0;
};

/// cpp-httplib backed client; opens a connection per request.
class HttplibClient final : public Client {
 public:
  explicit HttplibClient(std::chrono::seconds timeout = std::chrono::seconds{60})
      : timeout_(timeout) {}

  Response get(const std::string& url, const Headers& headers = {}) override;
  Response post(const std::string& url, const std::string& body, const std::string& content_type,
                const Headers& headers = {}) override;

 private:
  std::chrono::seconds timeout_;
};

struct UrlParts {
  std::string origin;  ///< scheme://host[:port]
  std::string path;    ///< path plus query, at least "/"
};

UrlParts split_url(const std::string& url);

/// Exponential backoff schedule: initial, initial*multiplier, ... capped at max.
struct Backoff {
  int initial_ms = 500;
  double multiplier = 2.0;
  int max_ms = 8000;

  /// Delay before retry number `retry` (1-based).
  Millis delay(int retry) const;
};

struct RetryPolicy {
  int max_retries = 2;
  Backoff backoff;
};

/// Status codes worth retrying: transport failure, 408, 425, 429 and 5xx.
bool is_retriable(const Response& response);

struct RetryOutcome {
  Response response;
  int attempts = 0;
};

/// Calls `send` until it yields a non-retriable response or the policy is
/// exhausted; sleeps on `clock` between attempts. attempts <= 1 + max_retries.
RetryOutcome send_with_retry(const RetryPolicy& policy, Clock& clock,
                             const std::function<Response()>& send);

}  // namespace slr::http
