#include "slr/http.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>

#include "slr/errors.hpp"

namespace slr::http {

UrlParts split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::invalid_request, "not an absolute URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

namespace {

httplib::Headers to_httplib(const Headers& headers) {
  httplib::Headers out;
  for (const auto& [k, v] : headers) out.emplace(k, v);
  return out;
}

Response from_result(const httplib::Result& result) {
  Response out;
  if (!result) {
    out.error = httplib::to_string(result.error());
    return out;
  }
  out.status = result->status;
  out.body = result->body;
  out.retry_after = result->get_header_value("Retry-After");
  return out;
}

httplib::Client make_client(const std::string& origin, std::chrono::seconds timeout) {
  httplib::Client client(origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  client.set_follow_location(true);
  return client;
}

}  // namespace

Response HttplibClient::get(const std::string& url, const Headers& headers) {
  try {
    const auto parts = split_url(url);
    auto client = make_client(parts.origin, timeout_);
    return from_result(client.Get(parts.path, to_httplib(headers)));
  } catch (const std::exception& e) {
    return Response{0, {}, e.what(), {}};
  }
}

Response HttplibClient::post(const std::string& url, const std::string& body,
                             const std::string& content_type, const Headers& headers) {
  try {
    const auto parts = split_url(url);
    auto client = make_client(parts.origin, timeout_);
    return from_result(client.Post(parts.path, to_httplib(headers), body, content_type));
  } catch (const std::exception& e) {
    return Response{0, {}, e.what(), {}};
  }
}

Millis Backoff::delay(int retry) const {
  const double raw = initial_ms * std::pow(multiplier, std::max(0, retry - 1));
  return Millis{static_cast<long long>(std::min<double>(raw, max_ms))};
}

bool is_retriable(const Response& response) {
  const int s = response.status;
  return s == 0 || s == 408 || s == 425 || s == 429 || s >= 500;
}

RetryOutcome send_with_retry(const RetryPolicy& policy, Clock& clock,
                             const std::function<Response()>& send) {
  RetryOutcome outcome;
  for (int attempt = 1;; ++attempt) {
    outcome.response = send();
    outcome.attempts = attempt;
    if (!is_retriable(outcome.response) || attempt > policy.max_retries) return outcome;
    clock.sleep_for(policy.backoff.delay(attempt));
  }
}

}  // namespace slr::http
