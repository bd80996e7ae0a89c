#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "slr/clock.hpp"
#include "slr/http.hpp"

namespace slr::arxiv {

enum class Field { All, Title, Abstract, Author };
enum class BooleanMode { And, Or };
enum class SortOrder { Relevance, SubmittedDate };

std::optional<Field> parse_field(std::string_view name);

struct SearchTerm {
  Field field = Field::All;
  std::string value;
};

struct SearchQuery {
  std::vector<SearchTerm> terms;
  BooleanMode mode = BooleanMode::And;
  int max_results = 10;
  int start = 0;
  SortOrder sort = SortOrder::Relevance;

  /// Raises invalid_request unless terms are nonempty, max_results is in
  /// [1,100] and start >= 0.
  void validate() const;
};

struct ArxivEntry {
  std::string entry_id;  ///< e.g. "2401.01234v2"
  std::string title;
  std::vector<std::string> authors;
  std::string abstract_text;
  std::string published;  ///< ISO-8601 as served by the feed
  std::string primary_category;
  std::string link_url;

  bool operator==(const ArxivEntry&) const = default;
};

void to_json(nlohmann::json& j, const ArxivEntry& e);
void from_json(const nlohmann::json& j, ArxivEntry& e);

inline constexpr std::string_view kDefaultApiBase = "http://export.arxiv.org/api/query";

/// Query-API URL: search_query, max_results, start, sortBy, sortOrder.
std::string build_query_url(const SearchQuery& query, std::string_view api_base = kDefaultApiBase);

struct FeedParseResult {
  std::vector<ArxivEntry> entries;
  std::size_t skipped = 0;  ///< entries dropped for a missing id or title
};

/// One entry per Atom <entry>, in feed order, with whitespace in titles and
/// abstracts collapsed. Malformed XML raises parse_error carrying the line.
FeedParseResult parse_feed(std::string_view atom_xml);

/// Narrow seam for scholarly databases; arXiv is the only implementation.
class ScholarlySearch {
 public:
  virtual ~ScholarlySearch() = default;
  virtual std::vector<ArxivEntry> search(const SearchQuery& query) = 0;
};

/// Answers every query with no results. Used when running without network.
class NullSearch final : public ScholarlySearch {
 public:
  std::vector<ArxivEntry> search(const SearchQuery& query) override;
};

/// Process-wide gate: grants request slots at least `min_interval` apart no
/// matter how many threads ask at once.
class RateLimiter {
 public:
  RateLimiter(Clock& clock, Millis min_interval) : clock_(clock), min_interval_(min_interval) {}

  /// Blocks (on the clock) until the reserved slot and returns its time.
  TimePoint acquire();

 private:
  Clock& clock_;
  Millis min_interval_;
  std::mutex mutex_;
  std::optional<TimePoint> last_;
};

/// URL-keyed feed cache with TTL and optional JSONL spill file
/// ({url, fetched_at, body_sha, entries}).
class FeedCache {
 public:
  explicit FeedCache(std::chrono::seconds ttl, std::optional<std::filesystem::path> spill = std::nullopt);

  std::optional<std::vector<ArxivEntry>> lookup(const std::string& url, TimePoint now) const;
  void store(const std::string& url, std::string_view body, const std::vector<ArxivEntry>& entries, TimePoint now);

 private:
  struct Slot {
    TimePoint fetched_at;
    std::string body_sha;
    std::vector<ArxivEntry> entries;
  };
  std::chrono::seconds ttl_;
  std::optional<std::filesystem::path> spill_;
  mutable std::mutex mutex_;
  std::map<std::string, Slot> slots_;
};

struct ClientConfig {
  std::string api_base{kDefaultApiBase};
  Millis min_interval{3000};
  std::chrono::seconds cache_ttl{24 * 3600};
  std::optional<std::filesystem::path> cache_file;
  http::RetryPolicy retry{2, {3000, 2.0, 30000}};
};

class ArxivClient final : public ScholarlySearch {
 public:
  ArxivClient(ClientConfig config, http::Client& client, Clock& clock);

  /// Cache first; on a miss waits for the shared rate limiter, fetches,
  /// parses and caches.
  std::vector<ArxivEntry> search(const SearchQuery& query) override;

  std::size_t network_fetches() const;

 private:
  ClientConfig config_;
  http::Client& client_;
  Clock& clock_;
  RateLimiter limiter_;
  FeedCache cache_;
  mutable std::mutex stats_mutex_;
  std::size_t fetches_ = 0;
};

/// Tool exposed to agents and the copilot.
inline constexpr std::string_view kSearchToolName = "arxiv_search";
nlohmann::json search_tool_parameters();
std::string search_tool_description();

/// Build a query from model-supplied tool arguments
/// ({"query", "field"?, "max_results"?}); bad arguments raise invalid_request.
SearchQuery query_from_tool_arguments(std::string_view arguments_json);

/// Compact JSON the model sees as the tool result.
std::string format_tool_result(const std::vector<ArxivEntry>& entries);

}  // namespace slr::arxiv
