#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "slr/agent.hpp"
#include "slr/arxiv.hpp"
#include "slr/checklist.hpp"
#include "slr/clock.hpp"
#include "slr/document.hpp"
#include "slr/llm.hpp"

namespace slr {

enum class TaskState { pending, running, retrying, done, failed };
enum class RunState { pending, parsing, evaluating, synthesizing, complete, failed };

std::string_view task_state_name(TaskState s);
std::string_view run_state_name(RunState s);
RunState parse_run_state(std::string_view name);
TaskState parse_task_state(std::string_view name);
bool is_terminal(RunState s);

struct EvaluationTask {
  std::string task_id;
  int item_id = 0;
  TaskState state = TaskState::pending;
  int attempts = 0;
  std::vector<Violation> last_violations;

  bool operator==(const EvaluationTask&) const = default;
};

/// How the narrative summary is produced.
enum class SynthesisMode { Template, Model };

struct RunConfig {
  int max_parallel = 6;
  int retry_budget = 2;  ///< extra attempts after the first
  std::size_t excerpt_budget = kDefaultExcerptBudget;
  Thresholds thresholds;
  int max_tool_calls = 3;
  std::string model_name = "gpt-4.1";
  double temperature = 0.0;
  int max_output_tokens = 1024;
  SynthesisMode synthesis = SynthesisMode::Template;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

struct EvaluationRun {
  std::string run_id;
  std::string doc_id;
  RunState state = RunState::pending;
  std::vector<EvaluationTask> tasks;
  std::optional<TimePoint> started_at;
  std::optional<TimePoint> finished_at;
  RunConfig config;
  std::string failure;       ///< diagnostic when state == failed
  std::string failure_code;  ///< error code name behind the failure
};

void to_json(nlohmann::json& j, const EvaluationRun& run);
void from_json(const nlohmann::json& j, EvaluationRun& run);

struct SocietyAggregate {
  Society society = Society::TitleAbstract;
  std::optional<double> mean_score;  ///< over ok items only
  std::size_t items_scored = 0;
  std::size_t items_failed = 0;

  bool operator==(const SocietyAggregate&) const = default;
};

struct Aggregates {
  std::vector<SocietyAggregate> societies;  ///< one per society, table order
  std::optional<double> overall_mean;       ///< mean over all ok items
};

inline constexpr std::string_view kReportSchemaVersion = "report/1";

struct EvaluationReport {
  std::string run_id;
  std::string doc_id;
  std::string document_title;
  std::string registry_version;
  std::vector<ItemEvaluation> items;
  std::vector<SocietyAggregate> societies;
  std::optional<double> overall_mean;
  bool degenerate = false;  ///< no item was scored
  std::string narrative_summary;
  bool summary_fallback = false;  ///< model synthesis failed, template used
  std::optional<TimePoint> started_at;
  std::optional<TimePoint> finished_at;
  TimePoint generated_at;
};

/// Report wire form. Needs the registry to name each item's society.
nlohmann::json report_to_json(const EvaluationReport& report, const ChecklistRegistry& registry);
EvaluationReport report_from_json(const nlohmann::json& j);
/// Serialized bytes as persisted and served (pretty-printed, trailing newline).
std::string serialize_report(const EvaluationReport& report, const ChecklistRegistry& registry);

struct ProgressEvent {
  std::uint64_t seq = 0;
  std::string run_id;
  std::optional<std::string> task_id;  ///< empty for run-level state changes
  std::string state;
  TimePoint at;
};

void to_json(nlohmann::json& j, const ProgressEvent& e);
void from_json(const nlohmann::json& j, ProgressEvent& e);

/// One pending task per item, ordered by item id.
std::vector<EvaluationTask> plan_tasks(const ChecklistRegistry& registry);

Aggregates aggregate(const std::vector<ItemEvaluation>& evaluations, const ChecklistRegistry& registry);

/// Deterministic summary: overall mean, each society mean and the lowest
/// scoring items.
std::string template_summary(const std::vector<ItemEvaluation>& evaluations, const Aggregates& aggregates,
                             const ChecklistRegistry& registry);

inline constexpr std::string_view kSynthesisTag = "synthesis";

EvaluationReport synthesize_report(const EvaluationRun& run, const std::vector<ItemEvaluation>& evaluations,
                                   const Aggregates& aggregates, const ChecklistRegistry& registry,
                                   llm::ChatProvider* provider, Clock& clock, std::string document_title = {});

struct RunRequest {
  std::string run_id;
  const ParsedDocument* document = nullptr;
  const ChecklistRegistry* registry = nullptr;
  RunConfig config;
};

struct RunCollaborators {
  llm::ChatProvider& provider;
  arxiv::ScholarlySearch& search;
  Clock& clock;
};

/// Observer hooks, called with the run state lock held so callbacks see a
/// consistent order. Throwing Error(persistence_error) from either hook
/// fails the run.
struct RunObserver {
  std::function<void(const ProgressEvent&)> on_event;
  std::function<void(const EvaluationRun&)> on_run_update;
  /// Receives the finished report before the run is marked complete.
  std::function<void(const EvaluationReport&)> on_report;
};

struct RunOutcome {
  EvaluationRun run;
  std::vector<ItemEvaluation> evaluations;  ///< completed items (all 27 when complete)
  std::optional<EvaluationReport> report;
};

/// Dispatch one agent per task with at most config.max_parallel in flight.
/// Validation rejections are retried up to retry_budget times and then mark
/// only that item failed; infrastructure failures fail the run while keeping
/// finished evaluations.
RunOutcome execute_run(const RunRequest& request, RunCollaborators collaborators, const RunObserver& observer = {});

}  // namespace slr
