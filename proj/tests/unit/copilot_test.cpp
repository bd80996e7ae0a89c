#include <gtest/gtest.h>

#include <future>
#include <latch>
#include <map>
#include <thread>

#include "fixtures.hpp"
#include "slr/copilot.hpp"
#include "slr/errors.hpp"
#include "slr/offline.hpp"

using namespace slr;
using nlohmann::json;

namespace {

const ChecklistRegistry& registry() { return ChecklistRegistry::bundled(); }

const RunOutcome& finished_run() {
  static const RunOutcome outcome = [] {
    llm::MockProvider mock(offline_responder(registry()));
    arxiv::NullSearch search;
    VirtualClock clock;
    return execute_run({"run-chat", &slr::testing::sample_document(), &registry(), {}}, {mock, search, clock});
  }();
  return outcome;
}

ConversationSession new_session(TokenBudgetPolicy budget = {}) {
  VirtualClock clock;
  return start_session(finished_run().run, &*finished_run().report, registry(), "ses-1", clock, budget);
}

struct MemoryStore final : SessionStore {
  std::map<std::string, ConversationSession> saved;
  bool fail = false;
  void save_session(const ConversationSession& s) override {
    if (fail) throw Error(ErrorCode::persistence_error, "disk full");
    saved[s.session_id] = s;
  }
  std::optional<ConversationSession> load_session(const std::string&, const std::string& id) const override {
    const auto it = saved.find(id);
    return it == saved.end() ? std::nullopt : std::optional(it->second);
  }
};

ChatTurn turn(TurnRole role, std::string content) { return {role, std::move(content), {}, {}}; }

}  // namespace

TEST(Copilot, SeedGroundsTheSession) {
  const auto& report = *finished_run().report;
  const auto seed = seed_message(report, registry());
  EXPECT_NE(seed.find("PRISMA-2020"), std::string::npos);
  for (Society s : kAllSocieties) EXPECT_NE(seed.find(society_display_name(s)), std::string::npos);
  EXPECT_NE(seed.find("Item 15 (Certainty assessment)"), std::string::npos);
  EXPECT_NE(seed.find(report.narrative_summary), std::string::npos);
}

TEST(Copilot, SessionNeedsACompleteRun) {
  VirtualClock clock;
  EvaluationRun pending;
  pending.run_id = "r";
  try {
    start_session(pending, nullptr, registry(), "s", clock);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_ready);
  }
  const auto s = new_session();
  EXPECT_EQ(s.context_refs.run_id, "run-chat");
  EXPECT_EQ(s.context_refs.registry_version, "PRISMA-2020");
  EXPECT_TRUE(s.history.empty());
}

TEST(Copilot, SessionJsonRoundTrip) {
  auto s = new_session();
  s.history = {turn(TurnRole::User, "q"), {TurnRole::Tool, "[]", {}, "arxiv_search"}, turn(TurnRole::Assistant, "a")};
  const json j = s;
  EXPECT_EQ(j.get<ConversationSession>(), s);
}

TEST(Copilot, TwoTurnExchangeKeepsOrderedHistory) {
  llm::MockProvider mock([](const llm::ChatRequest& r) { return llm::ChatResponse::text("reply to " + r.request_tag); });
  arxiv::NullSearch search;
  VirtualClock clock;
  Copilot copilot({}, mock, search, clock);
  MemoryStore store;
  auto s = new_session();
  EXPECT_EQ(copilot.respond(s, "How can I improve the search strategy?", slr::testing::sample_document(), &store),
            "reply to chat-ses-1-1");
  EXPECT_EQ(copilot.respond(s, "And the risk of bias section?", slr::testing::sample_document(), &store),
            "reply to chat-ses-1-2");
  ASSERT_EQ(s.history.size(), 4u);
  EXPECT_EQ(s.history[0].role, TurnRole::User);
  EXPECT_EQ(s.history[1].role, TurnRole::Assistant);
  EXPECT_EQ(s.history[2].content, "And the risk of bias section?");
  EXPECT_EQ(store.saved.at("ses-1"), s);

  const auto second = mock.requests().at(1);
  ASSERT_EQ(second.messages.size(), 4u);  // seed, q1, a1, q2
  EXPECT_EQ(second.messages[0].content, s.seed);
  EXPECT_EQ(second.messages[1].content, "How can I improve the search strategy?");
}

TEST(Copilot, CurrentMessageCarriesRelevantExcerpts) {
  llm::MockProvider mock;
  arxiv::NullSearch search;
  VirtualClock clock;
  Copilot copilot({}, mock, search, clock);
  const auto req = copilot.assemble(new_session(), "Which databases were searched?", slr::testing::sample_document());
  const auto& last = req.messages.back().content;
  EXPECT_EQ(last.rfind("Which databases were searched?", 0), 0u);
  EXPECT_NE(last.find("MEDLINE"), std::string::npos);
  ASSERT_EQ(req.tools.size(), 1u);
}

TEST(Copilot, BudgetDropsOldestTurnsButKeepsSeed) {
  llm::MockProvider mock;
  arxiv::NullSearch search;
  VirtualClock clock;
  Copilot copilot({}, mock, search, clock);
  auto base = new_session();
  std::vector<ChatTurn> history;
  for (int i = 0; i < 10; ++i) {
    history.push_back(turn(TurnRole::User, "u" + std::to_string(i) + std::string(298, 'x')));
    history.push_back({TurnRole::Tool, std::string(5000, 't'), {}, "arxiv_search"});
    history.push_back(turn(TurnRole::Assistant, "a" + std::to_string(i) + std::string(298, 'y')));
  }
  for (std::size_t fit : {6u, 5u, 0u}) {
    auto s = base;
    s.history = history;
    s.budget.max_context_chars = s.seed.size() + 2 + fit * 300;
    const auto req = copilot.assemble(s, "hi", slr::testing::sample_document());
    EXPECT_EQ(req.messages.front().content, s.seed);
    EXPECT_EQ(req.messages.back().content, "hi");
    const std::size_t kept = req.messages.size() - 2;
    EXPECT_EQ(kept, fit - fit % 2) << fit;
    if (kept) {
      EXPECT_EQ(req.messages[1].role, llm::Role::User);
      EXPECT_EQ(req.messages[kept].content.substr(0, 2), "a9");
    }
    for (const auto& m : req.messages) EXPECT_NE(m.content.substr(0, 1), "t");
  }
}

TEST(Copilot, ToolCallsAreRecordedBetweenUserAndReply) {
  llm::MockProvider mock;
  mock.script("chat-ses-1-1", llm::ChatResponse::tool("arxiv_search", R"({"query":"citation screening"})"));
  mock.script_text("chat-ses-1-1-turn-2", "Consider these papers.");
  slr::testing::FixtureSearch search;
  VirtualClock clock;
  Copilot copilot({}, mock, search, clock);
  auto s = new_session();
  EXPECT_EQ(copilot.respond(s, "Suggest related work", slr::testing::sample_document()), "Consider these papers.");
  ASSERT_EQ(s.history.size(), 3u);
  EXPECT_EQ(s.history[1].role, TurnRole::Tool);
  EXPECT_EQ(s.history[1].tool_name, "arxiv_search");
  EXPECT_EQ(search.calls(), 1);
}

TEST(Copilot, ProviderFailureLeavesSessionUnchanged) {
  llm::MockProvider mock;  // unscripted
  arxiv::NullSearch search;
  VirtualClock clock;
  Copilot copilot({}, mock, search, clock);
  auto s = new_session();
  const auto before = s;
  EXPECT_THROW(copilot.respond(s, "anything", slr::testing::sample_document()), Error);
  EXPECT_EQ(s, before);
}

TEST(Copilot, PersistenceFailureLeavesSessionUnchanged) {
  llm::MockProvider mock([](const llm::ChatRequest&) { return llm::ChatResponse::text("ok"); });
  arxiv::NullSearch search;
  VirtualClock clock;
  Copilot copilot({}, mock, search, clock);
  MemoryStore store;
  store.fail = true;
  auto s = new_session();
  const auto before = s;
  EXPECT_THROW(copilot.respond(s, "anything", slr::testing::sample_document(), &store), Error);
  EXPECT_EQ(s, before);
}

TEST(Copilot, EmptyMessageIsInvalid) {
  llm::MockProvider mock;
  arxiv::NullSearch search;
  VirtualClock clock;
  Copilot copilot({}, mock, search, clock);
  auto s = new_session();
  try {
    copilot.respond(s, "   ", slr::testing::sample_document());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_request);
  }
}

TEST(Copilot, OneReplyInFlightPerSession) {
  std::promise<void> entered, release;
  auto release_future = release.get_future().share();
  llm::MockProvider mock([&](const llm::ChatRequest&) {
    entered.set_value();
    release_future.wait();
    return llm::ChatResponse::text("done");
  });
  arxiv::NullSearch search;
  VirtualClock clock;
  Copilot copilot({}, mock, search, clock);
  auto s = new_session();
  auto other = s;
  auto first = std::async(std::launch::async, [&] { return copilot.respond(s, "first", slr::testing::sample_document()); });
  entered.get_future().wait();
  try {
    copilot.respond(other, "second", slr::testing::sample_document());
    ADD_FAILURE() << "second reply was accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::session_busy);
  }
  release.set_value();
  EXPECT_EQ(first.get(), "done");
  EXPECT_EQ(s.history.size(), 2u);
  EXPECT_TRUE(other.history.empty());
}

// --- citation verification ---------------------------------------------------

TEST(Citation, TitleSpanPrefersQuotes) {
  EXPECT_EQ(citation_title_span(R"(Meyer L. "Active Learning for Citation Screening." Journal 2024.)"),
            "Active Learning for Citation Screening");
  EXPECT_EQ(citation_title_span("Meyer L, Doe J. Active learning for citation screening in practice. J Rev. 2024."),
            "Active learning for citation screening in practice");
  EXPECT_EQ(citation_title_span("single"), "single");
}

TEST(Citation, OverlapAndClassification) {
  EXPECT_EQ(token_overlap("A B C", "a b c"), 1.0);
  EXPECT_EQ(token_overlap("a b c d", "a b"), 0.5);
  EXPECT_EQ(token_overlap("", "a"), 0.0);
  EXPECT_EQ(classify_overlap(0.8), CitationConfidence::matched);
  EXPECT_EQ(classify_overlap(0.79), CitationConfidence::ambiguous);
  EXPECT_EQ(classify_overlap(0.5), CitationConfidence::ambiguous);
  EXPECT_EQ(classify_overlap(0.49), CitationConfidence::not_found);
}

TEST(Citation, ConfidenceIsMonotoneInOverlap) {
  auto rank = [](CitationConfidence c) {
    return c == CitationConfidence::matched ? 2 : c == CitationConfidence::ambiguous ? 1 : 0;
  };
  int prev = 0;
  for (int i = 0; i <= 1000; ++i) {
    const int now = rank(classify_overlap(i / 1000.0));
    EXPECT_GE(now, prev);
    prev = now;
  }
}

TEST(Citation, VerifyAgainstFixture) {
  slr::testing::FixtureSearch search;
  const auto exact = verify_citation(
      R"(Meyer L. "Active Learning for Citation Screening: A Benchmark Study." arXiv:2401.01002, 2024.)", search);
  EXPECT_EQ(exact.confidence, CitationConfidence::matched);
  ASSERT_TRUE(exact.matched_entry);
  EXPECT_EQ(exact.matched_entry->entry_id, "2401.01002v2");
  EXPECT_EQ(exact.overlap, 1.0);

  const auto partial = verify_citation(R"(X. "Active Learning for Citation Screening in Clinical Practice.")", search);
  EXPECT_EQ(partial.confidence, CitationConfidence::ambiguous);
  EXPECT_TRUE(partial.matched_entry);

  const auto none = verify_citation(R"(Y. "Quantum chromodynamics of heavy quarkonium.")", search);
  EXPECT_EQ(none.confidence, CitationConfidence::not_found);
  EXPECT_FALSE(none.matched_entry);
  EXPECT_FALSE(none.rationale.empty());

  const auto j = to_json(exact);
  EXPECT_EQ(j["confidence"], "matched");
  EXPECT_EQ(j["matched_entry"]["id"], "2401.01002v2");
}

TEST(Citation, SearchFailureIsNotNotFound) {
  slr::testing::FixtureSearch search;
  search.fail = true;
  try {
    verify_citation(R"("Active Learning for Citation Screening")", search);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::transport_error);
  }
}

TEST(Citation, EmptyReferenceIsInvalid) {
  slr::testing::FixtureSearch search;
  EXPECT_THROW(verify_citation("  ", search), Error);
}
