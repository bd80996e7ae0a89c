#pragma once

#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "slr/arxiv.hpp"
#include "slr/checklist.hpp"
#include "slr/clock.hpp"
#include "slr/document.hpp"
#include "slr/llm.hpp"
#include "slr/orchestrator.hpp"

namespace slr {

enum class TurnRole { User, Assistant, Tool };

std::string_view turn_role_name(TurnRole role);

struct ChatTurn {
  TurnRole role = TurnRole::User;
  std::string content;
  TimePoint at;
  std::string tool_name;  ///< tool records only

  bool operator==(const ChatTurn&) const = default;
};

struct ContextRefs {
  std::string run_id;
  std::string doc_id;
  std::string registry_version;

  bool operator==(const ContextRefs&) const = default;
};

/// Context assembled per reply. Older turns are dropped first when the
/// request would exceed max_context_chars; the seed is always kept.
struct TokenBudgetPolicy {
  std::size_t max_context_chars = 24'000;
  std::size_t excerpt_budget = 4'000;

  bool operator==(const TokenBudgetPolicy&) const = default;
};

/// History holds user and assistant turns, with tool records between a user
/// turn and its reply. The system seed is stored separately.
struct ConversationSession {
  std::string session_id;
  std::string run_id;
  std::string seed;
  std::vector<ChatTurn> history;
  ContextRefs context_refs;
  TokenBudgetPolicy budget;
  TimePoint created_at;

  bool operator==(const ConversationSession&) const = default;
};

void to_json(nlohmann::json& j, const ConversationSession& s);
void from_json(const nlohmann::json& j, ConversationSession& s);

class SessionStore {
 public:
  virtual ~SessionStore() = default;
  virtual void save_session(const ConversationSession& session) = 0;
  virtual std::optional<ConversationSession> load_session(const std::string& run_id,
                                                          const std::string& session_id) const = 0;
};

/// System message grounding a session: the summary, every society mean, the
/// lowest scoring items and the checklist version.
std::string seed_message(const EvaluationReport& report, const ChecklistRegistry& registry);

/// New session for a finished run. Raises not_ready unless the run is
/// complete and has a report.
ConversationSession start_session(const EvaluationRun& run, const EvaluationReport* report,
                                  const ChecklistRegistry& registry, std::string session_id, const Clock& clock,
                                  TokenBudgetPolicy budget = {});

enum class CitationConfidence { matched, ambiguous, not_found };

std::string_view confidence_name(CitationConfidence c);

struct CitationVerdict {
  std::string reference_string;
  std::optional<arxiv::ArxivEntry> matched_entry;  ///< best candidate for matched and ambiguous
  CitationConfidence confidence = CitationConfidence::not_found;
  double overlap = 0;
  std::string rationale;
};

nlohmann::json to_json(const CitationVerdict& v);

struct CitationThresholds {
  double matched = 0.8;
  double ambiguous = 0.5;
};

/// Title-like span of a free-form reference: the longest quoted passage, or
/// else the period-delimited segment with the most words.
std::string citation_title_span(std::string_view reference);

/// |R ∩ C| / max(|R|, |C|) over lowercased word-token sets.
double token_overlap(std::string_view reference_title, std::string_view candidate_title);

CitationConfidence classify_overlap(double overlap, const CitationThresholds& thresholds = {});

/// Title-field arXiv lookup scored by token overlap. Search failures
/// propagate as Error; they are never reported as not_found.
CitationVerdict verify_citation(std::string_view reference, arxiv::ScholarlySearch& search,
                                const CitationThresholds& thresholds = {});

struct CopilotConfig {
  CitationThresholds citation;
  int max_tool_calls = 3;
  std::string model_name = "gpt-4.1";
  double temperature = 0.0;
  int max_output_tokens = 1024;
};

class Copilot {
 public:
  Copilot(CopilotConfig config, llm::ChatProvider& provider, arxiv::ScholarlySearch& search, Clock& clock)
      : config_(std::move(config)), provider_(provider), search_(search), clock_(clock) {}

  /// Provider request for the next reply: seed, trimmed history and
  /// manuscript excerpts relevant to `user_message`.
  llm::ChatRequest assemble(const ConversationSession& session, std::string_view user_message,
                            const ParsedDocument& doc) const;

  /// Reply to one user message. Only one reply per session may be in flight
  /// (session_busy otherwise). On provider failure the session is unchanged.
  /// When `store` is given the updated session is persisted before returning.
  std::string respond(ConversationSession& session, std::string_view user_message, const ParsedDocument& doc,
                      SessionStore* store = nullptr);

 private:
  CopilotConfig config_;
  llm::ChatProvider& provider_;
  arxiv::ScholarlySearch& search_;
  Clock& clock_;
  std::mutex busy_mutex_;
  std::set<std::string> busy_;
};

}  // namespace slr
