#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slr/clock.hpp"
#include "slr/copilot.hpp"
#include "slr/document.hpp"
#include "slr/orchestrator.hpp"

namespace slr {

/// Upload facts kept next to the source bytes.
struct UploadMeta {
  std::string filename;
  std::string media_type;  ///< "application/pdf", "text/plain" or "application/json"
  std::string doc_id;
  std::size_t byte_size = 0;
};

/// On-disk document store, one directory per run:
///
///   <root>/runs/<run_id>/source.bin     uploaded bytes
///                        upload.json    UploadMeta
///                        document.json  ParsedDocument
///                        run.json       EvaluationRun
///                        report.json    serialized report, written once
///                        events.jsonl   progress events, append-only
///                        replay.jsonl   provider exchanges, when recorded
///                        sessions/<session_id>.json
///
/// Every JSON document is replaced atomically.
class RunStore final : public SessionStore {
 public:
  explicit RunStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path run_dir(const std::string& run_id) const;
  std::filesystem::path report_path(const std::string& run_id) const;
  std::filesystem::path replay_path(const std::string& run_id) const;

  /// Fresh random id; never collides with an existing run directory.
  std::string new_run_id() const;

  void create_run(const EvaluationRun& run, std::string_view source, const UploadMeta& meta);
  bool exists(const std::string& run_id) const;
  std::vector<std::string> list_runs() const;

  std::string load_source(const std::string& run_id) const;
  UploadMeta load_meta(const std::string& run_id) const;

  void save_document(const std::string& run_id, const ParsedDocument& doc);
  std::optional<ParsedDocument> load_document(const std::string& run_id) const;

  void save_run(const EvaluationRun& run);
  /// Raises run_not_found for unknown ids.
  EvaluationRun load_run(const std::string& run_id) const;

  void append_event(const ProgressEvent& event);
  /// Events with seq > cursor, in order. A torn trailing line is ignored.
  std::vector<ProgressEvent> events(const std::string& run_id, std::uint64_t cursor = 0) const;

  void save_report(const std::string& run_id, std::string_view bytes);
  std::optional<std::string> report_bytes(const std::string& run_id) const;

  void save_session(const ConversationSession& session) override;
  std::optional<ConversationSession> load_session(const std::string& run_id,
                                                  const std::string& session_id) const override;

  /// Mark runs left in a non-terminal state by a previous process as failed.
  /// Returns the ids that were marked.
  std::vector<std::string> recover(const Clock& clock);

 private:
  std::filesystem::path root_;
};

}  // namespace slr
