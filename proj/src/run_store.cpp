#include "slr/run_store.hpp"

#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "slr/errors.hpp"
#include "slr/files.hpp"

namespace slr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-'; });
}

json read_json(const fs::path& path) {
  const auto text = files::read(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::persistence_error, "corrupt store file " + path.string() + ": " + e.what());
  }
}

}  // namespace

RunStore::RunStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "runs", ec);
  if (ec) throw Error(ErrorCode::persistence_error, "cannot create store at " + root_.string() + ": " + ec.message());
}

fs::path RunStore::run_dir(const std::string& run_id) const {
  if (!valid_id(run_id)) throw Error(ErrorCode::run_not_found, "no run " + run_id);
  return root_ / "runs" / run_id;
}

fs::path RunStore::report_path(const std::string& run_id) const { return run_dir(run_id) / "report.json"; }
fs::path RunStore::replay_path(const std::string& run_id) const { return run_dir(run_id) / "replay.jsonl"; }

std::string RunStore::new_run_id() const {
  static constexpr char kHex[] = "0123456789abcdef";
  std::random_device device;
  std::mt19937_64 rng((static_cast<std::uint64_t>(device()) << 32) ^ device());
  for (;;) {
    std::string id = "run-";
    for (int i = 0; i < 16; ++i) id.push_back(kHex[rng() & 0xF]);
    if (!fs::exists(root_ / "runs" / id)) return id;
  }
}

void RunStore::create_run(const EvaluationRun& run, std::string_view source, const UploadMeta& meta) {
  const auto dir = run_dir(run.run_id);
  std::error_code ec;
  if (!fs::create_directory(dir, ec) || ec)
    throw Error(ErrorCode::persistence_error, "cannot create run directory " + dir.string());
  fs::create_directories(dir / "sessions", ec);
  files::write_atomic(dir / "source.bin", source);
  files::write_atomic(dir / "upload.json", json{{"filename", meta.filename},
                                                {"media_type", meta.media_type},
                                                {"doc_id", meta.doc_id},
                                                {"byte_size", meta.byte_size}}
                                               .dump(2));
  save_run(run);
}

bool RunStore::exists(const std::string& run_id) const {
  return valid_id(run_id) && fs::exists(root_ / "runs" / run_id / "run.json");
}

std::vector<std::string> RunStore::list_runs() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root_ / "runs")) {
    const auto id = entry.path().filename().string();
    if (entry.is_directory() && exists(id)) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string RunStore::load_source(const std::string& run_id) const { return files::read(run_dir(run_id) / "source.bin"); }

UploadMeta RunStore::load_meta(const std::string& run_id) const {
  const auto j = read_json(run_dir(run_id) / "upload.json");
  return {j.at("filename").get<std::string>(), j.at("media_type").get<std::string>(), j.at("doc_id").get<std::string>(),
          j.at("byte_size").get<std::size_t>()};
}

void RunStore::save_document(const std::string& run_id, const ParsedDocument& doc) {
  files::write_atomic(run_dir(run_id) / "document.json", json(doc).dump());
}

std::optional<ParsedDocument> RunStore::load_document(const std::string& run_id) const {
  const auto path = run_dir(run_id) / "document.json";
  if (!fs::exists(path)) return std::nullopt;
  return read_json(path).get<ParsedDocument>();
}

void RunStore::save_run(const EvaluationRun& run) {
  files::write_atomic(run_dir(run.run_id) / "run.json", json(run).dump(2));
}

EvaluationRun RunStore::load_run(const std::string& run_id) const {
  if (!exists(run_id)) throw Error(ErrorCode::run_not_found, "no run " + run_id, {{"run_id", run_id}});
  return read_json(run_dir(run_id) / "run.json").get<EvaluationRun>();
}

void RunStore::append_event(const ProgressEvent& event) {
  files::append_line(run_dir(event.run_id) / "events.jsonl", json(event).dump());
}

std::vector<ProgressEvent> RunStore::events(const std::string& run_id, std::uint64_t cursor) const {
  if (!exists(run_id)) throw Error(ErrorCode::run_not_found, "no run " + run_id, {{"run_id", run_id}});
  std::vector<ProgressEvent> out;
  std::ifstream in(run_dir(run_id) / "events.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto event = json::parse(line).get<ProgressEvent>();
      if (event.seq > cursor) out.push_back(std::move(event));
    } catch (const std::exception&) {
      // A crash can leave a partial last line; it carries no committed event.
    }
  }
  return out;
}

void RunStore::save_report(const std::string& run_id, std::string_view bytes) {
  files::write_atomic(report_path(run_id), bytes);
}

std::optional<std::string> RunStore::report_bytes(const std::string& run_id) const {
  const auto path = report_path(run_id);
  if (!fs::exists(path)) return std::nullopt;
  return files::read(path);
}

void RunStore::save_session(const ConversationSession& session) {
  if (!valid_id(session.session_id)) throw Error(ErrorCode::invalid_request, "invalid session id");
  files::write_atomic(run_dir(session.run_id) / "sessions" / (session.session_id + ".json"), json(session).dump(2));
}

std::optional<ConversationSession> RunStore::load_session(const std::string& run_id,
                                                          const std::string& session_id) const {
  if (!valid_id(session_id)) return std::nullopt;
  const auto path = run_dir(run_id) / "sessions" / (session_id + ".json");
  if (!fs::exists(path)) return std::nullopt;
  return read_json(path).get<ConversationSession>();
}

std::vector<std::string> RunStore::recover(const Clock& clock) {
  std::vector<std::string> marked;
  for (const auto& id : list_runs()) {
    EvaluationRun run;
    try {
      run = load_run(id);
    } catch (const std::exception& e) {
      spdlog::error("skipping unreadable run {}: {}", id, e.what());
      continue;
    }
    if (is_terminal(run.state)) continue;
    run.state = RunState::failed;
    run.failure = "interrupted: the service stopped before the run finished";
    run.failure_code = std::string(code_name(ErrorCode::internal_error));
    run.finished_at = std::chrono::floor<Millis>(clock.now());
    save_run(run);
    const auto past = events(id);
    append_event({past.empty() ? 1 : past.back().seq + 1, id, std::nullopt, "failed", *run.finished_at});
    marked.push_back(id);
  }
  return marked;
}

}  // namespace slr
