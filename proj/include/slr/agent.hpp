#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "slr/arxiv.hpp"
#include "slr/checklist.hpp"
#include "slr/document.hpp"
#include "slr/llm.hpp"

namespace slr {

inline constexpr std::string_view kPromptTemplateId = "item-eval/1";
inline constexpr std::string_view kOutputSchemaVersion = "agent-output/1";

struct AgentSpec {
  ChecklistItem item;
  std::string prompt_template_id{kPromptTemplateId};
  int max_tool_calls = 3;
  std::string output_schema_version{kOutputSchemaVersion};
};

/// Fields lifted from the model's JSON object, unvalidated. `score` keeps the
/// raw number so out-of-range or fractional values reach the validator.
struct AgentOutput {
  std::optional<double> score;
  std::string feedback;
  std::vector<std::string> evidence_quotes;

  bool operator==(const AgentOutput&) const = default;
};

/// First well-formed JSON object in `raw` (code fences and surrounding prose
/// are ignored). Empty optional means unparseable. Never judges content.
std::optional<AgentOutput> parse_agent_output(std::string_view raw);

enum class Violation { unparseable, score_out_of_range, feedback_too_short, quote_not_in_document };

std::string_view violation_name(Violation v);
Violation parse_violation(std::string_view name);

struct ValidationVerdict {
  bool accepted = false;
  std::vector<Violation> violations;
  std::vector<std::string> verbatim_quotes;  ///< document spans matched by each quote, when accepted
};

struct Thresholds {
  std::size_t min_feedback_chars = 20;
};

/// Checks in order: parseability, integral score in [0,5], feedback length,
/// then that every quote occurs in the document (whitespace-normalized). The
/// quote check is waived for score 0; a nonzero score needs at least one quote.
ValidationVerdict validate_evaluation(const std::optional<AgentOutput>& candidate, const ParsedDocument& doc,
                                      const Thresholds& thresholds = {});

enum class EvalStatus { ok, failed };

std::string_view status_name(EvalStatus s);

struct ItemEvaluation {
  int item_id = 0;
  std::optional<int> score;
  std::string feedback;
  std::vector<std::string> evidence_quotes;
  std::vector<std::string> citations_consulted;
  int attempts = 0;
  EvalStatus status = EvalStatus::failed;
  std::string agent_trace_id;
  std::vector<Violation> violations;  ///< of the last attempt, empty when ok

  bool operator==(const ItemEvaluation&) const = default;
};

void to_json(nlohmann::json& j, const ItemEvaluation& e);
void from_json(const nlohmann::json& j, ItemEvaluation& e);

struct PromptOptions {
  std::string model_name = "gpt-4.1";
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::string request_tag;
  std::string document_title;
  std::size_t excerpt_budget = kDefaultExcerptBudget;
  std::vector<Violation> prior_violations;  ///< reasons the previous attempt was rejected
};

/// One system message (guidance, scale anchors, exemplar, output schema) and
/// one user message (excerpts). Declares the search tool when max_tool_calls > 0.
llm::ChatRequest build_prompt(const AgentSpec& spec, const ExcerptBundle& bundle, const PromptOptions& options = {});

struct AgentRunOptions {
  int max_attempts = 3;
  std::size_t excerpt_budget = kDefaultExcerptBudget;
  Thresholds thresholds;
  std::string model_name = "gpt-4.1";
  double temperature = 0.0;
  int max_output_tokens = 1024;
};

struct AgentCollaborators {
  llm::ChatProvider& provider;
  arxiv::ScholarlySearch& search;
};

/// Called before each attempt (1-based) with the violations that triggered it.
using AttemptObserver = std::function<void(int attempt, const std::vector<Violation>& prior)>;

/// Request tag of the first provider call of an attempt; follow-up calls in
/// the tool loop append "-turn-<k>".
std::string attempt_tag(int item_id, int attempt);

/// Run the agent for one item: prompt, bounded tool loop, parse, validate. A
/// rejected attempt is retried with a fresh conversation whose prompt lists
/// the violations, up to max_attempts. Provider failures propagate as Error
/// (infrastructure), never as a failed evaluation.
ItemEvaluation run_item_agent(const AgentSpec& spec, const ParsedDocument& doc, AgentCollaborators collaborators,
                              const AgentRunOptions& options = {}, const AttemptObserver& observer = {});

}  // namespace slr
