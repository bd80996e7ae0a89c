#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "slr/errors.hpp"
#include "slr/files.hpp"
#include "slr/run_store.hpp"

using namespace slr;
using nlohmann::json;

namespace {

EvaluationRun pending_run(const std::string& id, RunState state = RunState::pending) {
  EvaluationRun run;
  run.run_id = id;
  run.doc_id = "doc";
  run.state = state;
  run.tasks = plan_tasks(ChecklistRegistry::bundled());
  return run;
}

UploadMeta meta() { return {"paper.txt", "text/plain", "doc", 5}; }

ProgressEvent event(const std::string& run, std::uint64_t seq, std::string state) {
  return {seq, run, std::nullopt, std::move(state), TimePoint{std::chrono::seconds{seq}}};
}

}  // namespace

TEST(RunStore, CreateAndLoad) {
  slr::testing::TempDir dir;
  RunStore store(dir.path());
  const auto id = store.new_run_id();
  EXPECT_EQ(id.size(), 4u + 16u);
  EXPECT_EQ(id.rfind("run-", 0), 0u);
  store.create_run(pending_run(id), "hello", meta());
  EXPECT_TRUE(store.exists(id));
  EXPECT_EQ(store.list_runs(), std::vector<std::string>{id});
  EXPECT_EQ(store.load_source(id), "hello");
  EXPECT_EQ(store.load_meta(id).filename, "paper.txt");
  EXPECT_EQ(store.load_run(id).tasks.size(), 27u);
  EXPECT_FALSE(store.load_document(id));
  store.save_document(id, slr::testing::sample_document());
  EXPECT_EQ(*store.load_document(id), slr::testing::sample_document());
}

TEST(RunStore, DuplicateRunIsRejected) {
  slr::testing::TempDir dir;
  RunStore store(dir.path());
  store.create_run(pending_run("run-a"), "x", meta());
  EXPECT_THROW(store.create_run(pending_run("run-a"), "x", meta()), Error);
}

TEST(RunStore, UnknownAndHostileIdsAreNotFound) {
  slr::testing::TempDir dir;
  RunStore store(dir.path());
  for (const std::string id : {"run-missing", "../etc", "a/b", ""}) {
    EXPECT_FALSE(store.exists(id)) << id;
    try {
      store.load_run(id);
      ADD_FAILURE() << id;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::run_not_found);
    }
  }
}

TEST(RunStore, EventsReplayFromCursor) {
  slr::testing::TempDir dir;
  RunStore store(dir.path());
  store.create_run(pending_run("run-e"), "x", meta());
  for (std::uint64_t s = 1; s <= 5; ++s) store.append_event(event("run-e", s, "running"));
  EXPECT_EQ(store.events("run-e").size(), 5u);
  const auto tail = store.events("run-e", 3);
  ASSERT_EQ(tail.size(), 2u);
  EXPECT_EQ(tail[0].seq, 4u);
  EXPECT_TRUE(store.events("run-e", 5).empty());
}

TEST(RunStore, TornEventLineIsIgnored) {
  slr::testing::TempDir dir;
  RunStore store(dir.path());
  store.create_run(pending_run("run-t"), "x", meta());
  store.append_event(event("run-t", 1, "evaluating"));
  {
    std::ofstream out(store.run_dir("run-t") / "events.jsonl", std::ios::app);
    out << R"({"seq":2,"run_id":"run-t","sta)";
  }
  EXPECT_EQ(store.events("run-t").size(), 1u);
}

TEST(RunStore, ReportBytesAreKeptVerbatim) {
  slr::testing::TempDir dir;
  RunStore store(dir.path());
  store.create_run(pending_run("run-r"), "x", meta());
  EXPECT_FALSE(store.report_bytes("run-r"));
  const std::string bytes = "{\n  \"x\": 1\n}\n";
  store.save_report("run-r", bytes);
  EXPECT_EQ(*store.report_bytes("run-r"), bytes);
}

TEST(RunStore, SessionsRoundTrip) {
  slr::testing::TempDir dir;
  RunStore store(dir.path());
  store.create_run(pending_run("run-s"), "x", meta());
  ConversationSession s;
  s.session_id = "ses-1";
  s.run_id = "run-s";
  s.seed = "seed";
  s.history = {{TurnRole::User, "q", TimePoint{std::chrono::seconds{3}}, {}}};
  store.save_session(s);
  EXPECT_EQ(*store.load_session("run-s", "ses-1"), s);
  EXPECT_FALSE(store.load_session("run-s", "ses-2"));
  EXPECT_FALSE(store.load_session("run-s", "../x"));
}

TEST(RunStore, RecoverMarksInterruptedRunsFailed) {
  slr::testing::TempDir dir;
  VirtualClock clock;
  {
    RunStore store(dir.path());
    store.create_run(pending_run("run-done", RunState::complete), "x", meta());
    store.create_run(pending_run("run-mid", RunState::evaluating), "x", meta());
    store.append_event(event("run-mid", 1, "pending"));
    store.append_event(event("run-mid", 2, "evaluating"));
  }
  RunStore reopened(dir.path());
  EXPECT_EQ(reopened.recover(clock), std::vector<std::string>{"run-mid"});
  const auto run = reopened.load_run("run-mid");
  EXPECT_EQ(run.state, RunState::failed);
  EXPECT_EQ(run.failure_code, "internal_error");
  const auto events = reopened.events("run-mid");
  ASSERT_EQ(events.size(), 3u);
  EXPECT_EQ(events.back().seq, 3u);
  EXPECT_EQ(events.back().state, "failed");
  EXPECT_EQ(reopened.load_run("run-done").state, RunState::complete);
  EXPECT_TRUE(reopened.recover(clock).empty());
}

TEST(RunStore, CorruptRunFileIsPersistenceError) {
  slr::testing::TempDir dir;
  RunStore store(dir.path());
  store.create_run(pending_run("run-c"), "x", meta());
  files::write_atomic(store.run_dir("run-c") / "run.json", "{trunc");
  try {
    store.load_run("run-c");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::persistence_error);
  }
}
