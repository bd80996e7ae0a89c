#include "slr/service.hpp"

#include <charconv>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "slr/errors.hpp"
#include "slr/hashing.hpp"
#include "slr/offline.hpp"
#include "slr/orchestrator.hpp"
#include "slr/text.hpp"

namespace slr {

using nlohmann::json;

std::string_view media_type_of(UploadKind kind) {
  switch (kind) {
    case UploadKind::Pdf: return "application/pdf";
    case UploadKind::PlainText: return "text/plain";
    case UploadKind::StructuredJson: return "application/json";
  }
  return "application/octet-stream";
}

std::optional<UploadKind> detect_upload_kind(std::string_view filename, std::string_view content_type,
                                             std::string_view bytes) {
  if (bytes.substr(0, 5) == "%PDF-") return UploadKind::Pdf;
  const auto ext = text::to_lower(std::filesystem::path(std::string(filename)).extension().string());
  if (ext == ".pdf") return UploadKind::Pdf;
  if (ext == ".json") return UploadKind::StructuredJson;
  if (ext == ".txt" || ext == ".md" || ext == ".text") return UploadKind::PlainText;
  if (!ext.empty()) return std::nullopt;
  const auto type = text::to_lower(text::trim(content_type.substr(0, content_type.find(';'))));
  if (type == "application/pdf") return UploadKind::Pdf;
  if (type == "application/json") return UploadKind::StructuredJson;
  if (type == "text/plain" || type == "text/markdown") return UploadKind::PlainText;
  return std::nullopt;
}

Backends make_backends(const AppConfig& config, ProviderMode mode, const ChecklistRegistry& registry, Clock& clock,
                       const std::optional<std::filesystem::path>& replay_log,
                       const std::optional<std::filesystem::path>& record_to) {
  Backends b;
  b.http = std::make_unique<http::HttplibClient>(std::chrono::seconds(config.provider.timeout_s));
  std::unique_ptr<llm::ChatProvider> base;
  switch (mode) {
    case ProviderMode::Offline:
      base = std::make_unique<llm::MockProvider>(offline_responder(registry));
      break;
    case ProviderMode::Live:
      base = std::make_unique<llm::HttpChatProvider>(config.provider, *b.http, clock);
      break;
    case ProviderMode::Replay: {
      const auto path = replay_log ? *replay_log : std::filesystem::path(config.service.replay_log);
      if (path.empty()) throw Error(ErrorCode::invalid_request, "replay mode needs a replay log");
      if (!std::filesystem::exists(path))
        throw Error(ErrorCode::file_not_found, "replay log not found: " + path.string(), {{"path", path.string()}});
      b.replay_store = std::make_unique<llm::ReplayStore>(path);
      base = std::make_unique<llm::ReplayProvider>(*b.replay_store);
      break;
    }
  }
  if (record_to) {
    if (b.replay_store) throw Error(ErrorCode::invalid_request, "cannot record while replaying");
    b.replay_store = std::make_unique<llm::ReplayStore>(*record_to);
    b.inner = std::move(base);
    b.provider = std::make_unique<llm::RecordingProvider>(*b.inner, *b.replay_store);
  } else {
    b.provider = std::move(base);
  }
  if (config.service.arxiv_enabled && mode == ProviderMode::Live) {
    b.search = std::make_unique<arxiv::ArxivClient>(config.arxiv, *b.http, clock);
  } else {
    b.search = std::make_unique<arxiv::NullSearch>();
  }
  if (!config.extractor.url.empty()) b.extractor = std::make_unique<RemoteExtractor>(config.extractor, *b.http, clock);
  return b;
}

RunService::RunService(RunStore& store, ServiceDeps deps, RunConfig run_config, CopilotConfig copilot_config,
                       TokenBudgetPolicy chat_budget, int executors)
    : store_(store),
      deps_(deps),
      run_config_(std::move(run_config)),
      copilot_config_(copilot_config),
      chat_budget_(chat_budget),
      copilot_(std::move(copilot_config), deps.provider, deps.search, deps.clock) {
  for (const auto& id : store_.recover(deps_.clock)) spdlog::warn("run {} was interrupted and is now failed", id);
  for (int i = 0; i < executors; ++i) executors_.emplace_back([this] { executor_loop(); });
}

RunService::~RunService() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  work_cv_.notify_all();
  for (auto& t : executors_) t.join();
}

SubmitResult RunService::submit(std::string_view bytes, std::string filename, std::string content_type,
                                const json& options, bool schedule) {
  if (bytes.empty()) throw Error(ErrorCode::empty_document, "empty document");
  const auto kind = detect_upload_kind(filename, content_type, bytes);
  if (!kind) {
    throw Error(ErrorCode::unsupported_media_type, "unsupported document type",
                {{"filename", filename}, {"content_type", content_type}});
  }

  RunConfig config = run_config_;
  if (options.is_object() && !options.empty()) {
    json merged = to_json(config);
    for (const auto& [key, value] : options.items()) {
      if (!merged.contains(key)) throw Error(ErrorCode::invalid_request, "unknown run option: " + key);
      merged[key] = value;
    }
    try {
      config = run_config_from_json(merged);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::invalid_request, std::string("bad run option: ") + e.what());
    }
    if (config.max_parallel < 1 || config.retry_budget < 0)
      throw Error(ErrorCode::invalid_request, "max_parallel must be >= 1 and retry_budget >= 0");
  }

  std::optional<ParsedDocument> doc;
  if (*kind == UploadKind::PlainText) doc = ingest_text(bytes);
  if (*kind == UploadKind::StructuredJson) doc = ingest_structured(bytes);
  if (*kind == UploadKind::Pdf && !deps_.extractor)
    throw Error(ErrorCode::extractor_unavailable, "PDF uploads need an extraction service (extractor.url)");

  EvaluationRun run;
  run.run_id = store_.new_run_id();
  run.doc_id = doc ? doc->doc_id : sha256_hex(bytes);
  run.config = config;
  run.tasks = plan_tasks(deps_.registry);
  store_.create_run(run, bytes, {filename, std::string(media_type_of(*kind)), run.doc_id, bytes.size()});
  if (doc) store_.save_document(run.run_id, *doc);
  store_.append_event({1, run.run_id, std::nullopt, std::string(run_state_name(RunState::pending)),
                       std::chrono::floor<Millis>(deps_.clock.now())});

  if (schedule) {
    {
      std::lock_guard lock(mutex_);
      if (pending_.insert(run.run_id).second) queue_.push_back(run.run_id);
    }
    work_cv_.notify_one();
  }
  return {run.run_id, run.doc_id};
}

void RunService::process(const std::string& run_id) {
  auto run = store_.load_run(run_id);
  if (is_terminal(run.state)) return;
  auto past = store_.events(run_id);
  std::uint64_t seq = past.empty() ? 0 : past.back().seq;
  auto record = [&](std::optional<std::string> task_id, RunState state) {
    store_.append_event({++seq, run_id, std::move(task_id), std::string(run_state_name(state)),
                         std::chrono::floor<Millis>(deps_.clock.now())});
  };
  auto fail = [&](ErrorCode code, const std::string& why) {
    run.state = RunState::failed;
    run.failure = why;
    run.failure_code = std::string(code_name(code));
    run.finished_at = std::chrono::floor<Millis>(deps_.clock.now());
    store_.save_run(run);
    record(std::nullopt, RunState::failed);
  };

  auto doc = store_.load_document(run_id);
  if (!doc) {
    run.state = RunState::parsing;
    store_.save_run(run);
    record(std::nullopt, RunState::parsing);
    try {
      if (!deps_.extractor) throw Error(ErrorCode::extractor_unavailable, "no extraction service configured");
      doc = deps_.extractor->extract(store_.load_source(run_id));
      store_.save_document(run_id, *doc);
    } catch (const Error& e) {
      spdlog::error("run {}: document extraction failed: {}", run_id, e.what());
      fail(e.code(), e.what());
      return;
    }
  }

  const std::uint64_t base = seq;
  RunObserver observer;
  observer.on_event = [&](const ProgressEvent& e) {
    ProgressEvent shifted = e;
    shifted.seq += base;
    store_.append_event(shifted);
    seq = shifted.seq;
  };
  observer.on_run_update = [&](const EvaluationRun& r) { store_.save_run(r); };
  observer.on_report = [&](const EvaluationReport& report) {
    store_.save_report(run_id, serialize_report(report, deps_.registry));
  };

  try {
    const auto outcome = execute_run({run_id, &*doc, &deps_.registry, run.config},
                                     {deps_.provider, deps_.search, deps_.clock}, observer);
    store_.save_run(outcome.run);
  } catch (const std::exception& e) {
    spdlog::error("run {} aborted: {}", run_id, e.what());
    run = store_.load_run(run_id);
    if (!is_terminal(run.state)) fail(ErrorCode::internal_error, e.what());
  }
}

void RunService::executor_loop() {
  for (;;) {
    std::string run_id;
    {
      std::unique_lock lock(mutex_);
      work_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      run_id = queue_.front();
      queue_.pop_front();
    }
    try {
      process(run_id);
    } catch (const std::exception& e) {
      spdlog::error("run {}: {}", run_id, e.what());
    }
    {
      std::lock_guard lock(mutex_);
      pending_.erase(run_id);
    }
    idle_cv_.notify_all();
  }
}

void RunService::wait_idle() {
  std::unique_lock lock(mutex_);
  idle_cv_.wait(lock, [&] { return pending_.empty(); });
}

json RunService::chat(const std::string& run_id, const std::optional<std::string>& session_id,
                      std::string_view message) {
  const auto run = store_.load_run(run_id);
  const auto bytes = store_.report_bytes(run_id);
  if (run.state != RunState::complete || !bytes)
    throw Error(ErrorCode::not_ready, "run " + run_id + " has no report yet", {{"state", run_state_name(run.state)}});
  const auto report = report_from_json(json::parse(*bytes));
  const auto doc = store_.load_document(run_id);
  if (!doc) throw Error(ErrorCode::persistence_error, "run " + run_id + " has no stored document");

  ConversationSession session;
  if (session_id && !session_id->empty()) {
    auto loaded = store_.load_session(run_id, *session_id);
    if (!loaded) throw Error(ErrorCode::session_not_found, "no session " + *session_id, {{"session_id", *session_id}});
    session = std::move(*loaded);
  } else {
    auto id = store_.new_run_id();
    id.replace(0, 3, "ses");
    session = start_session(run, &report, deps_.registry, id, deps_.clock, chat_budget_);
    store_.save_session(session);
  }
  const auto reply = copilot_.respond(session, message, *doc, &store_);
  return {{"session_id", session.session_id}, {"reply", reply}, {"history_length", session.history.size()}};
}

CitationVerdict RunService::verify_citation(std::string_view reference) {
  return slr::verify_citation(reference, deps_.search, copilot_config_.citation);
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  send_json(res, http_status(e.code()), to_api_error(e));
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const json::exception& e) {
      send_error(res, Error(ErrorCode::invalid_request, std::string("malformed JSON: ") + e.what()));
    } catch (const std::exception& e) {
      spdlog::error("{} {} failed: {}", req.method, req.path, e.what());
      send_error(res, Error(ErrorCode::internal_error, "internal error"));
    }
  };
}

bool is_api_path(const std::string& path) {
  return path.rfind("/runs", 0) == 0 || path.rfind("/citations", 0) == 0;
}

std::uint64_t parse_cursor(const httplib::Request& req) {
  if (!req.has_param("cursor")) return 0;
  const auto raw = req.get_param_value("cursor");
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
  if (ec != std::errc() || ptr != raw.data() + raw.size())
    throw Error(ErrorCode::invalid_request, "cursor must be a non-negative integer");
  return value;
}

}  // namespace

void mount_api(httplib::Server& server, RunService& service, const ServiceConfig& config) {
  server.set_payload_max_length(config.max_upload_bytes);

  if (!config.auth_token.empty()) {
    const std::string expected = "Bearer " + config.auth_token;
    server.set_pre_routing_handler([expected](const httplib::Request& req, httplib::Response& res) {
      if (!is_api_path(req.path) || req.get_header_value("Authorization") == expected)
        return httplib::Server::HandlerResponse::Unhandled;
      send_error(res, Error(ErrorCode::unauthorized, "missing or wrong bearer token"));
      return httplib::Server::HandlerResponse::Handled;
    });
  }

  server.Get("/health", guarded([&service](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}, {"registry_version", service.registry().version()}});
  }));

  server.Get("/runs", guarded([&service](const httplib::Request&, httplib::Response& res) {
    json runs = json::array();
    for (const auto& id : service.store().list_runs()) {
      const auto run = service.store().load_run(id);
      runs.push_back({{"run_id", run.run_id}, {"doc_id", run.doc_id}, {"state", run_state_name(run.state)}});
    }
    send_json(res, 200, {{"runs", runs}});
  }));

  server.Post("/runs", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    std::string bytes, filename, content_type;
    json options = json::object();
    if (req.is_multipart_form_data()) {
      if (!req.has_file("document"))
        throw Error(ErrorCode::invalid_request, "multipart field 'document' is required");
      const auto file = req.get_file_value("document");
      bytes = file.content;
      filename = file.filename;
      content_type = file.content_type;
      if (req.has_file("options")) options = json::parse(req.get_file_value("options").content);
    } else {
      bytes = req.body;
      filename = req.has_param("filename") ? req.get_param_value("filename") : std::string();
      content_type = req.get_header_value("Content-Type");
    }
    const auto result = service.submit(bytes, filename, content_type, options);
    send_json(res, 202, {{"run_id", result.run_id}, {"doc_id", result.doc_id}});
  }));

  server.Get(R"(/runs/([A-Za-z0-9-]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, json(service.store().load_run(req.matches[1])));
  }));

  server.Get(R"(/runs/([A-Za-z0-9-]+)/events)",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const std::string run_id = req.matches[1];
               const auto cursor = parse_cursor(req);
               const auto events = service.store().events(run_id, cursor);
               send_json(res, 200,
                         {{"run_id", run_id},
                          {"events", events},
                          {"next_cursor", events.empty() ? cursor : events.back().seq}});
             }));

  server.Get(R"(/runs/([A-Za-z0-9-]+)/report)",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const std::string run_id = req.matches[1];
               const auto run = service.store().load_run(run_id);
               const auto bytes = service.store().report_bytes(run_id);
               if (run.state != RunState::complete || !bytes)
                 throw Error(ErrorCode::not_ready, "report not available yet",
                             {{"state", run_state_name(run.state)}});
               res.status = 200;
               res.set_content(*bytes, "application/json");
             }));

  server.Post(R"(/runs/([A-Za-z0-9-]+)/chat)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const auto body = json::parse(req.body);
                if (!body.is_object() || !body.contains("message") || !body["message"].is_string())
                  throw Error(ErrorCode::invalid_request, "body needs a string 'message'");
                std::optional<std::string> session_id;
                if (body.contains("session_id") && body["session_id"].is_string())
                  session_id = body["session_id"].get<std::string>();
                send_json(res, 200, service.chat(req.matches[1], session_id, body["message"].get<std::string>()));
              }));

  server.Post("/citations/verify", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    if (!body.is_object() || !body.contains("reference") || !body["reference"].is_string())
      throw Error(ErrorCode::invalid_request, "body needs a string 'reference'");
    send_json(res, 200, to_json(service.verify_citation(body["reference"].get<std::string>())));
  }));

  if (!config.static_dir.empty() && !server.set_mount_point("/", config.static_dir))
    spdlog::warn("static directory {} not found; UI not served", config.static_dir);
}

}  // namespace slr
