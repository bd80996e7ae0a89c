#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <random>

#include "slr/errors.hpp"
#include "slr/files.hpp"
#include "slr/text.hpp"

namespace slr::testing {

std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(SLR_TEST_DATA_DIR) / name; }

std::string read_data(const std::string& name) { return files::read(data_path(name)); }

std::string sample_document_bytes() { return files::read(SLR_SAMPLE_DOC); }

const ParsedDocument& sample_document() {
  static const ParsedDocument doc = ingest_structured(sample_document_bytes());
  return doc;
}

std::vector<arxiv::ArxivEntry> fixture_entries() { return arxiv::parse_feed(read_data("arxiv_feed.xml")).entries; }

FixtureSearch::FixtureSearch() : entries_(fixture_entries()) {}

std::vector<arxiv::ArxivEntry> FixtureSearch::search(const arxiv::SearchQuery& query) {
  query.validate();
  ++calls_;
  if (fail) throw Error(ErrorCode::transport_error, "fixture search unavailable");
  std::vector<arxiv::ArxivEntry> out;
  for (const auto& e : entries_) {
    const auto words = text::word_tokens(e.title + " " + e.abstract_text);
    auto has = [&](const arxiv::SearchTerm& t) {
      const auto needle = text::word_tokens(t.value);
      return std::all_of(needle.begin(), needle.end(),
                         [&](const std::string& w) { return std::find(words.begin(), words.end(), w) != words.end(); });
    };
    const bool hit = query.mode == arxiv::BooleanMode::And ? std::all_of(query.terms.begin(), query.terms.end(), has)
                                                           : std::any_of(query.terms.begin(), query.terms.end(), has);
    if (hit) out.push_back(e);
    if (static_cast<int>(out.size()) == query.max_results) break;
  }
  return out;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device device;
  path_ = std::filesystem::temp_directory_path() /
          ("slr-test-" + std::to_string(device()) + "-" + std::to_string(counter.fetch_add(1)));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

nlohmann::json without_run_identity(nlohmann::json report) {
  report.erase("run_id");
  report.erase("timestamps");
  return report;
}

std::string item_bytes(const EvaluationReport& report, int item_id) {
  for (const auto& e : report.items) {
    if (e.item_id == item_id) return nlohmann::json(e).dump();
  }
  return {};
}

void ScriptedHttp::push(int status, std::string body, std::string error) {
  std::lock_guard lock(mutex_);
  queue_.push_back({status, std::move(body), std::move(error), {}});
}

http::Response ScriptedHttp::next() {
  if (queue_.empty()) return {0, {}, "no scripted response", {}};
  const auto& r = queue_[std::min(cursor_, queue_.size() - 1)];
  ++cursor_;
  return r;
}

http::Response ScriptedHttp::get(const std::string& url, const http::Headers& headers) {
  std::lock_guard lock(mutex_);
  sent_.push_back({"GET", url, {}, {}, headers});
  return next();
}

http::Response ScriptedHttp::post(const std::string& url, const std::string& body, const std::string& content_type,
                                  const http::Headers& headers) {
  std::lock_guard lock(mutex_);
  sent_.push_back({"POST", url, body, content_type, headers});
  return next();
}

std::vector<ScriptedHttp::Sent> ScriptedHttp::sent() const {
  std::lock_guard lock(mutex_);
  return sent_;
}

}  // namespace slr::testing
