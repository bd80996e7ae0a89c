#pragma once

#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "slr/checklist.hpp"
#include "slr/clock.hpp"
#include "slr/config.hpp"
#include "slr/copilot.hpp"
#include "slr/extractor.hpp"
#include "slr/llm.hpp"
#include "slr/run_store.hpp"

namespace httplib {
class Server;
}

namespace slr {

enum class UploadKind { Pdf, PlainText, StructuredJson };

std::string_view media_type_of(UploadKind kind);

/// Decide how to ingest an upload from its file extension, then its content
/// type; PDF magic bytes win over both. Empty optional means unsupported.
std::optional<UploadKind> detect_upload_kind(std::string_view filename, std::string_view content_type,
                                             std::string_view bytes);

/// Model, search and extraction backends for one process.
struct Backends {
  std::unique_ptr<http::Client> http;
  std::unique_ptr<llm::ReplayStore> replay_store;
  std::unique_ptr<llm::ChatProvider> inner;  ///< wrapped provider when recording
  std::unique_ptr<llm::ChatProvider> provider;
  std::unique_ptr<arxiv::ScholarlySearch> search;
  std::unique_ptr<RemoteExtractor> extractor;
};

/// Offline uses the deterministic offline responder; replay serves
/// `replay_log`; live talks to the configured endpoint. `record_to` wraps the
/// provider so every exchange is appended to that log.
Backends make_backends(const AppConfig& config, ProviderMode mode, const ChecklistRegistry& registry, Clock& clock,
                       const std::optional<std::filesystem::path>& replay_log = std::nullopt,
                       const std::optional<std::filesystem::path>& record_to = std::nullopt);

struct ServiceDeps {
  const ChecklistRegistry& registry;
  llm::ChatProvider& provider;
  arxiv::ScholarlySearch& search;
  Clock& clock;
  RemoteExtractor* extractor = nullptr;  ///< PDF uploads fail without one
};

struct SubmitResult {
  std::string run_id;
  std::string doc_id;
};

/// Run lifecycle on top of a RunStore: accept uploads, execute runs on a
/// bounded pool of executor threads and answer follow-up chat.
class RunService {
 public:
  /// `executors` = 0 runs nothing in the background; call process() directly.
  RunService(RunStore& store, ServiceDeps deps, RunConfig run_config, CopilotConfig copilot_config,
             TokenBudgetPolicy chat_budget, int executors);
  ~RunService();

  RunService(const RunService&) = delete;
  RunService& operator=(const RunService&) = delete;

  /// Validate and persist an upload, create a pending run and, when
  /// `schedule` is set, queue it. Local formats are parsed here so malformed
  /// input is rejected before a run exists.
  SubmitResult submit(std::string_view bytes, std::string filename, std::string content_type,
                      const nlohmann::json& options = nlohmann::json::object(), bool schedule = true);

  /// Execute a run to a terminal state on the calling thread.
  void process(const std::string& run_id);

  /// Block until the queue is empty and no run is executing.
  void wait_idle();

  /// {session_id, reply, history_length}. Starts a session when none is given.
  nlohmann::json chat(const std::string& run_id, const std::optional<std::string>& session_id,
                      std::string_view message);

  CitationVerdict verify_citation(std::string_view reference);

  RunStore& store() { return store_; }
  const ChecklistRegistry& registry() const { return deps_.registry; }

 private:
  void executor_loop();

  RunStore& store_;
  ServiceDeps deps_;
  RunConfig run_config_;
  CopilotConfig copilot_config_;
  TokenBudgetPolicy chat_budget_;
  Copilot copilot_;

  std::mutex mutex_;
  std::condition_variable work_cv_;
  std::condition_variable idle_cv_;
  std::deque<std::string> queue_;
  std::set<std::string> pending_;  ///< queued or executing
  bool stopping_ = false;
  std::vector<std::thread> executors_;
};

/// Register the JSON API (and the static UI mount, when configured) on `server`.
void mount_api(httplib::Server& server, RunService& service, const ServiceConfig& config);

}  // namespace slr
