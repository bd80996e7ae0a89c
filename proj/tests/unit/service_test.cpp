#include <gtest/gtest.h>

#include <cstdio>
#include <thread>

#include <httplib.h>

#include "fixtures.hpp"
#include "slr/errors.hpp"
#include "slr/files.hpp"
#include "slr/offline.hpp"
#include "slr/service.hpp"

using namespace slr;
using nlohmann::json;

namespace {

/// Offline service on an ephemeral port, one executor thread.
class ApiHarness {
 public:
  explicit ApiHarness(const std::filesystem::path& root, std::string token = {})
      : store_(root),
        provider_(offline_responder(ChecklistRegistry::bundled())),
        service_(store_, {ChecklistRegistry::bundled(), provider_, search_, clock_, nullptr}, RunConfig{},
                 CopilotConfig{}, TokenBudgetPolicy{}, 1) {
    config_.auth_token = std::move(token);
    mount_api(server_, service_, config_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~ApiHarness() {
    server_.stop();
    thread_.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(30);
    return c;
  }

  RunService& service() { return service_; }
  RunStore& store() { return store_; }

 private:
  RunStore store_;
  llm::MockProvider provider_;
  arxiv::NullSearch search_;
  SystemClock clock_;
  RunService service_;
  ServiceConfig config_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

json body_of(const httplib::Result& r) { return json::parse(r->body); }

std::string submit_sample(httplib::Client& c) {
  const auto r = c.Post("/runs?filename=sample.json", slr::testing::sample_document_bytes(), "application/json");
  EXPECT_TRUE(r);
  EXPECT_EQ(r->status, 202);
  return body_of(r)["run_id"].get<std::string>();
}

}  // namespace

TEST(UploadKind, Detection) {
  EXPECT_EQ(detect_upload_kind("a.pdf", "", "x"), UploadKind::Pdf);
  EXPECT_EQ(detect_upload_kind("a.bin", "", "%PDF-1.7"), UploadKind::Pdf);
  EXPECT_EQ(detect_upload_kind("a.JSON", "", "{}"), UploadKind::StructuredJson);
  EXPECT_EQ(detect_upload_kind("a.md", "", "x"), UploadKind::PlainText);
  EXPECT_EQ(detect_upload_kind("", "text/plain; charset=utf-8", "x"), UploadKind::PlainText);
  EXPECT_EQ(detect_upload_kind("", "application/json", "{}"), UploadKind::StructuredJson);
  EXPECT_FALSE(detect_upload_kind("a.docx", "text/plain", "x"));
  EXPECT_FALSE(detect_upload_kind("", "image/png", "x"));
}

TEST(RunServiceDirect, SubmitRejectsBadInput) {
  slr::testing::TempDir dir;
  RunStore store(dir.path());
  llm::MockProvider provider(offline_responder(ChecklistRegistry::bundled()));
  arxiv::NullSearch search;
  VirtualClock clock;
  RunService service(store, {ChecklistRegistry::bundled(), provider, search, clock, nullptr}, RunConfig{},
                     CopilotConfig{}, TokenBudgetPolicy{}, 0);
  auto code = [&](std::string_view bytes, std::string name, json options = json::object()) {
    try {
      service.submit(bytes, std::move(name), "", options, false);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::internal_error;
  };
  EXPECT_EQ(code("", "a.txt"), ErrorCode::empty_document);
  EXPECT_EQ(code("x", "a.docx"), ErrorCode::unsupported_media_type);
  EXPECT_EQ(code("%PDF-1.4 ...", "a.pdf"), ErrorCode::extractor_unavailable);
  EXPECT_EQ(code("{\"title\": 3}", "a.json"), ErrorCode::schema_error);
  EXPECT_EQ(code("hello", "a.txt", {{"bogus", 1}}), ErrorCode::invalid_request);
  EXPECT_EQ(code("hello", "a.txt", {{"max_parallel", 0}}), ErrorCode::invalid_request);
  EXPECT_TRUE(store.list_runs().empty());
}

TEST(RunServiceDirect, ProcessCompletesAndRespectsOptions) {
  slr::testing::TempDir dir;
  RunStore store(dir.path());
  llm::MockProvider provider(offline_responder(ChecklistRegistry::bundled()));
  arxiv::NullSearch search;
  VirtualClock clock;
  RunService service(store, {ChecklistRegistry::bundled(), provider, search, clock, nullptr}, RunConfig{},
                     CopilotConfig{}, TokenBudgetPolicy{}, 0);
  const auto sub =
      service.submit(slr::testing::sample_document_bytes(), "s.json", "", {{"max_parallel", 2}}, false);
  EXPECT_EQ(store.load_run(sub.run_id).state, RunState::pending);
  EXPECT_EQ(sub.doc_id, slr::testing::sample_document().doc_id);
  service.process(sub.run_id);
  const auto run = store.load_run(sub.run_id);
  EXPECT_EQ(run.state, RunState::complete);
  EXPECT_EQ(run.config.max_parallel, 2);
  ASSERT_TRUE(store.report_bytes(sub.run_id));
  const auto events = store.events(sub.run_id);
  ASSERT_FALSE(events.empty());
  EXPECT_EQ(events.front().state, "pending");
  EXPECT_EQ(events.back().state, "complete");
  for (std::size_t i = 0; i < events.size(); ++i) EXPECT_EQ(events[i].seq, i + 1);
  // Terminal runs are left alone.
  service.process(sub.run_id);
  EXPECT_EQ(store.events(sub.run_id).size(), events.size());
}

TEST(Api, HealthAndErrors) {
  slr::testing::TempDir dir;
  ApiHarness h(dir.path());
  auto c = h.client();
  auto health = c.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(body_of(health)["status"], "ok");

  auto empty = c.Post("/runs?filename=a.txt", "", "text/plain");
  ASSERT_TRUE(empty);
  EXPECT_EQ(empty->status, 400);
  EXPECT_EQ(body_of(empty)["error"]["code"], "empty_document");

  auto unsupported = c.Post("/runs", "GIF89a", "image/gif");
  ASSERT_TRUE(unsupported);
  EXPECT_EQ(unsupported->status, 415);
  EXPECT_EQ(body_of(unsupported)["error"]["code"], "unsupported_media_type");

  auto missing = c.Get("/runs/run-nope");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(body_of(missing)["error"]["code"], "run_not_found");

  auto bad_cursor = c.Get("/runs/run-nope/events?cursor=abc");
  ASSERT_TRUE(bad_cursor);
  EXPECT_EQ(bad_cursor->status, 400);

  auto bad_chat = c.Post("/runs/run-nope/chat", "{not json", "application/json");
  ASSERT_TRUE(bad_chat);
  EXPECT_EQ(bad_chat->status, 400);
  EXPECT_EQ(body_of(bad_chat)["error"]["code"], "invalid_request");
}

TEST(Api, RunLifecycle) {
  slr::testing::TempDir dir;
  ApiHarness h(dir.path());
  auto c = h.client();
  const auto run_id = submit_sample(c);
  h.service().wait_idle();

  auto run = c.Get(("/runs/" + run_id).c_str());
  ASSERT_TRUE(run);
  EXPECT_EQ(body_of(run)["state"], "complete");

  auto report = c.Get(("/runs/" + run_id + "/report").c_str());
  ASSERT_TRUE(report);
  EXPECT_EQ(report->status, 200);
  EXPECT_EQ(report->body, *h.store().report_bytes(run_id));
  EXPECT_EQ(body_of(report)["items"].size(), 27u);

  auto all = c.Get(("/runs/" + run_id + "/events").c_str());
  const auto events = body_of(all);
  ASSERT_GE(events["events"].size(), 3u);
  const auto cursor = events["events"][1]["seq"].get<std::uint64_t>();
  auto tail = c.Get(("/runs/" + run_id + "/events?cursor=" + std::to_string(cursor)).c_str());
  const auto rest = body_of(tail);
  EXPECT_EQ(rest["events"].size(), events["events"].size() - 2);
  EXPECT_EQ(rest["events"][0]["seq"], cursor + 1);
  EXPECT_EQ(rest["next_cursor"], events["next_cursor"]);

  auto listed = c.Get("/runs");
  EXPECT_EQ(body_of(listed)["runs"].size(), 1u);
}

TEST(Api, ReportBeforeCompletionIsNotReady) {
  slr::testing::TempDir dir;
  ApiHarness h(dir.path());
  const auto sub = h.service().submit("Some text about a review.", "a.txt", "", json::object(), false);
  auto c = h.client();
  auto report = c.Get(("/runs/" + sub.run_id + "/report").c_str());
  ASSERT_TRUE(report);
  EXPECT_EQ(report->status, 409);
  EXPECT_EQ(body_of(report)["error"]["code"], "not_ready");
  auto chat = c.Post(("/runs/" + sub.run_id + "/chat").c_str(), R"({"message": "hi"})", "application/json");
  ASSERT_TRUE(chat);
  EXPECT_EQ(chat->status, 409);
}

TEST(Api, ChatKeepsHistory) {
  slr::testing::TempDir dir;
  ApiHarness h(dir.path());
  auto c = h.client();
  const auto run_id = submit_sample(c);
  h.service().wait_idle();
  const auto path = "/runs/" + run_id + "/chat";
  auto first = c.Post(path.c_str(), R"({"message": "Why did item 6 score as it did?"})", "application/json");
  ASSERT_TRUE(first);
  ASSERT_EQ(first->status, 200) << first->body;
  const auto a = body_of(first);
  EXPECT_EQ(a["history_length"], 2);
  const json next = {{"session_id", a["session_id"]}, {"message", "And item 7?"}};
  auto second = c.Post(path.c_str(), next.dump(), "application/json");
  ASSERT_TRUE(second);
  EXPECT_EQ(body_of(second)["history_length"], 4);
  EXPECT_EQ(body_of(second)["session_id"], a["session_id"]);

  const json unknown = {{"session_id", "ses-missing"}, {"message", "x"}};
  auto lost = c.Post(path.c_str(), unknown.dump(), "application/json");
  ASSERT_TRUE(lost);
  EXPECT_EQ(lost->status, 404);
  EXPECT_EQ(body_of(lost)["error"]["code"], "session_not_found");

  auto citation = c.Post("/citations/verify", R"({"reference": "Some Paper Title. 2024."})", "application/json");
  ASSERT_TRUE(citation);
  EXPECT_EQ(citation->status, 200);
  EXPECT_EQ(body_of(citation)["confidence"], "not_found");
}

TEST(Api, BearerToken) {
  slr::testing::TempDir dir;
  ApiHarness h(dir.path(), "s3cret");
  auto c = h.client();
  auto denied = c.Get("/runs");
  ASSERT_TRUE(denied);
  EXPECT_EQ(denied->status, 401);
  EXPECT_EQ(body_of(denied)["error"]["code"], "unauthorized");
  auto health = c.Get("/health");
  EXPECT_EQ(health->status, 200);
  c.set_bearer_token_auth("s3cret");
  auto allowed = c.Get("/runs");
  EXPECT_EQ(allowed->status, 200);
}

TEST(Api, MultipartUpload) {
  slr::testing::TempDir dir;
  ApiHarness h(dir.path());
  auto c = h.client();
  httplib::MultipartFormDataItems items = {
      {"document", slr::testing::sample_document_bytes(), "sample.json", "application/json"},
      {"options", R"({"retry_budget": 0})", "options.json", "application/json"},
  };
  auto r = c.Post("/runs", items);
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 202) << r->body;
  const auto run_id = body_of(r)["run_id"].get<std::string>();
  h.service().wait_idle();
  EXPECT_EQ(h.store().load_run(run_id).config.retry_budget, 0);
}

TEST(Api, RestartRecoversInterruptedRuns) {
  slr::testing::TempDir dir;
  std::string run_id;
  {
    RunStore store(dir.path());
    llm::MockProvider provider(offline_responder(ChecklistRegistry::bundled()));
    arxiv::NullSearch search;
    VirtualClock clock;
    RunService service(store, {ChecklistRegistry::bundled(), provider, search, clock, nullptr}, RunConfig{},
                       CopilotConfig{}, TokenBudgetPolicy{}, 0);
    run_id = service.submit("Some text.", "a.txt", "", json::object(), false).run_id;
  }
  ApiHarness h(dir.path());
  const auto run = h.store().load_run(run_id);
  EXPECT_EQ(run.state, RunState::failed);
  EXPECT_EQ(run.failure_code, "internal_error");
  EXPECT_EQ(h.store().events(run_id).back().state, "failed");
}

TEST(Api, MatchesCommandLine) {
  slr::testing::TempDir dir;
  std::string http_report;
  {
    ApiHarness h(dir.path() / "api");
    auto c = h.client();
    const auto run_id = submit_sample(c);
    h.service().wait_idle();
    http_report = c.Get(("/runs/" + run_id + "/report").c_str())->body;
  }
  const auto doc = dir.path() / "sample.json";
  files::write_atomic(doc, slr::testing::sample_document_bytes());
  const std::string cmd = std::string(SLR_CLI_PATH) + " --data-dir " + (dir.path() / "cli").string() +
                          " evaluate --offline --json " + doc.string() + " 2>/dev/null";
  std::string cli_report;
  {
    FILE* pipe = popen(cmd.c_str(), "r");
    ASSERT_NE(pipe, nullptr);
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) cli_report.append(buf, n);
    ASSERT_EQ(pclose(pipe), 0);
  }
  EXPECT_EQ(slr::testing::without_run_identity(json::parse(http_report)),
            slr::testing::without_run_identity(json::parse(cli_report)));
}
