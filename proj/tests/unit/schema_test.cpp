#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "schema_check.hpp"
#include "slr/copilot.hpp"
#include "slr/errors.hpp"
#include "slr/metrics.hpp"
#include "slr/offline.hpp"
#include "slr/orchestrator.hpp"

using namespace slr;
using nlohmann::json;
namespace t = slr::testing;

namespace {

const ChecklistRegistry& registry() { return ChecklistRegistry::bundled(); }

struct Finished {
  RunOutcome outcome;
  std::vector<ProgressEvent> events;
};

const Finished& finished() {
  static const Finished f = [] {
    Finished out;
    llm::MockProvider mock(offline_responder(registry()));
    arxiv::NullSearch search;
    VirtualClock clock;
    RunObserver observer;
    observer.on_event = [&](const ProgressEvent& e) { out.events.push_back(e); };
    out.outcome =
        execute_run({"run-schema", &t::sample_document(), &registry(), {}}, {mock, search, clock}, observer);
    return out;
  }();
  return f;
}

void expect_valid(const std::string& schema, const json& instance) {
  const auto problems = t::schema_violations(t::load_schema(schema), instance);
  EXPECT_TRUE(problems.empty()) << schema << ": " << (problems.empty() ? "" : problems.front());
}

}  // namespace

TEST(Schemas, ReportAsServed) {
  ASSERT_TRUE(finished().outcome.report);
  expect_valid("report.schema.json", json::parse(serialize_report(*finished().outcome.report, registry())));
}

TEST(Schemas, FailedItemsStillConform) {
  llm::MockProvider mock;
  arxiv::NullSearch search;
  VirtualClock clock;
  mock.script_text(std::string(kSynthesisTag), "summary");
  RunConfig config;
  config.retry_budget = 0;
  // Unscripted requests are scripting errors, which end the run.
  const auto outcome = execute_run({"run-bad", &t::sample_document(), &registry(), config}, {mock, search, clock});
  expect_valid("run.schema.json", json(outcome.run));
}

TEST(Schemas, RunAndEvents) {
  expect_valid("run.schema.json", json(finished().outcome.run));
  const json page = {{"run_id", "run-schema"}, {"events", finished().events}, {"next_cursor", finished().events.size()}};
  expect_valid("events.schema.json", page);
}

TEST(Schemas, ApiErrorForEveryCode) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::internal_error); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    expect_valid("error.schema.json", to_api_error(Error(code, "message", {{"k", 1}})));
  }
}

TEST(Schemas, SmallResponses) {
  expect_valid("submit_response.schema.json", {{"run_id", "run-x"}, {"doc_id", "abc"}});
  expect_valid("health.schema.json", {{"status", "ok"}, {"registry_version", registry().version()}});
  expect_valid("chat_request.schema.json", {{"message", "hi"}, {"session_id", "ses-1"}});
  expect_valid("chat_response.schema.json", {{"session_id", "ses-1"}, {"reply", "hello"}, {"history_length", 2}});
}

TEST(Schemas, SessionAfterAnExchange) {
  llm::MockProvider mock(offline_responder(registry()));
  arxiv::NullSearch search;
  VirtualClock clock;
  Copilot copilot({}, mock, search, clock);
  auto session = start_session(finished().outcome.run, &*finished().outcome.report, registry(), "ses-1", clock, {});
  copilot.respond(session, "Which items failed?", t::sample_document(), nullptr);
  expect_valid("session.schema.json", json(session));
}

TEST(Schemas, CitationVerdicts) {
  t::FixtureSearch search;
  expect_valid("citation_verdict.schema.json",
               to_json(verify_citation("Meyer L. Active Learning for Citation Screening: A Benchmark Study. 2024.",
                                       search)));
  expect_valid("citation_verdict.schema.json",
               to_json(verify_citation("Quantum annealing of spin glasses. 2019.", search)));
}

TEST(Schemas, Benchmark) {
  const auto m = metrics::load_scores(t::data_path("scores.csv"));
  for (auto agg : {metrics::HumanAggregation::Mean, metrics::HumanAggregation::Median, metrics::HumanAggregation::PerExpert}) {
    expect_valid("benchmark.schema.json", metrics::to_json(metrics::benchmark(m, registry(), "agent", agg)));
  }
}

TEST(Schemas, BundledSampleDocument) {
  expect_valid("structured_document.schema.json", json::parse(t::sample_document_bytes()));
}

TEST(SchemaChecker, ReportsViolations) {
  const auto schema = t::load_schema("submit_response.schema.json");
  EXPECT_FALSE(t::schema_violations(schema, json{{"run_id", "x"}}).empty());
  EXPECT_FALSE(t::schema_violations(schema, json{{"run_id", 1}, {"doc_id", "d"}}).empty());
  EXPECT_FALSE(t::schema_violations(schema, json{{"run_id", "x"}, {"doc_id", "d"}, {"extra", 1}}).empty());
  const auto health = t::load_schema("health.schema.json");
  EXPECT_FALSE(t::schema_violations(health, json{{"status", "down"}, {"registry_version", "v"}}).empty());
}
