#pragma once

#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "slr/arxiv.hpp"
#include "slr/document.hpp"
#include "slr/http.hpp"
#include "slr/orchestrator.hpp"

namespace slr::testing {

std::filesystem::path data_path(const std::string& name);
std::string read_data(const std::string& name);

/// The bundled synthetic manuscript.
const ParsedDocument& sample_document();
std::string sample_document_bytes();

/// Entries of the checked-in Atom feed fixture.
std::vector<arxiv::ArxivEntry> fixture_entries();

/// Fixture-backed search: returns entries sharing at least one title word
/// with the query (OR) or all of them (AND), up to max_results.
class FixtureSearch final : public arxiv::ScholarlySearch {
 public:
  FixtureSearch();
  std::vector<arxiv::ArxivEntry> search(const arxiv::SearchQuery& query) override;
  int calls() const { return calls_; }
  bool fail = false;  ///< throw transport_error instead of answering

 private:
  std::vector<arxiv::ArxivEntry> entries_;
  int calls_ = 0;
};

/// Answers requests from a queue of canned responses (the last one repeats)
/// and remembers what was sent.
class ScriptedHttp final : public http::Client {
 public:
  struct Sent {
    std::string method;
    std::string url;
    std::string body;
    std::string content_type;
    http::Headers headers;
  };

  void push(int status, std::string body, std::string error = {});
  http::Response get(const std::string& url, const http::Headers& headers = {}) override;
  http::Response post(const std::string& url, const std::string& body, const std::string& content_type,
                      const http::Headers& headers = {}) override;
  std::vector<Sent> sent() const;

 private:
  http::Response next();

  mutable std::mutex mutex_;
  std::vector<http::Response> queue_;
  std::size_t cursor_ = 0;
  std::vector<Sent> sent_;
};

/// Unique directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Report JSON with run_id and timestamps removed, for cross-run comparison.
nlohmann::json without_run_identity(nlohmann::json report);

/// Serialized JSON of one report item, for byte comparisons.
std::string item_bytes(const EvaluationReport& report, int item_id);

}  // namespace slr::testing
