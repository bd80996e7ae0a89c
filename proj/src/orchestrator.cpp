#include "slr/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "slr/errors.hpp"
#include "slr/text.hpp"

namespace slr {

using nlohmann::json;

std::string_view task_state_name(TaskState s) {
  switch (s) {
    case TaskState::pending: return "pending";
    case TaskState::running: return "running";
    case TaskState::retrying: return "retrying";
    case TaskState::done: return "done";
    case TaskState::failed: return "failed";
  }
  return "pending";
}

std::string_view run_state_name(RunState s) {
  switch (s) {
    case RunState::pending: return "pending";
    case RunState::parsing: return "parsing";
    case RunState::evaluating: return "evaluating";
    case RunState::synthesizing: return "synthesizing";
    case RunState::complete: return "complete";
    case RunState::failed: return "failed";
  }
  return "pending";
}

RunState parse_run_state(std::string_view name) {
  for (auto s : {RunState::pending, RunState::parsing, RunState::evaluating, RunState::synthesizing,
                 RunState::complete, RunState::failed}) {
    if (run_state_name(s) == name) return s;
  }
  throw Error(ErrorCode::parse_error, "unknown run state: " + std::string(name));
}

TaskState parse_task_state(std::string_view name) {
  for (auto s : {TaskState::pending, TaskState::running, TaskState::retrying, TaskState::done, TaskState::failed}) {
    if (task_state_name(s) == name) return s;
  }
  throw Error(ErrorCode::parse_error, "unknown task state: " + std::string(name));
}

bool is_terminal(RunState s) { return s == RunState::complete || s == RunState::failed; }

namespace {

json optional_time(const std::optional<TimePoint>& tp) { return tp ? json(format_timestamp(*tp)) : json(); }

std::optional<TimePoint> read_optional_time(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return parse_timestamp(it->get<std::string>());
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(); }

std::optional<double> read_optional_number(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

/// Timestamps are kept at millisecond precision so they survive serialization.
TimePoint stamp(const Clock& clock) { return std::chrono::floor<Millis>(clock.now()); }

std::vector<std::string> violation_names(const std::vector<Violation>& violations) {
  std::vector<std::string> out;
  for (auto v : violations) out.emplace_back(violation_name(v));
  return out;
}

std::string fixed2(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << v;
  return out.str();
}

}  // namespace

json to_json(const RunConfig& c) {
  return {{"max_parallel", c.max_parallel},
          {"retry_budget", c.retry_budget},
          {"excerpt_budget", c.excerpt_budget},
          {"min_feedback_chars", c.thresholds.min_feedback_chars},
          {"max_tool_calls", c.max_tool_calls},
          {"model", c.model_name},
          {"temperature", c.temperature},
          {"max_output_tokens", c.max_output_tokens},
          {"synthesis", c.synthesis == SynthesisMode::Model ? "model" : "template"}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  c.max_parallel = j.value("max_parallel", c.max_parallel);
  c.retry_budget = j.value("retry_budget", c.retry_budget);
  c.excerpt_budget = j.value("excerpt_budget", c.excerpt_budget);
  c.thresholds.min_feedback_chars = j.value("min_feedback_chars", c.thresholds.min_feedback_chars);
  c.max_tool_calls = j.value("max_tool_calls", c.max_tool_calls);
  c.model_name = j.value("model", c.model_name);
  c.temperature = j.value("temperature", c.temperature);
  c.max_output_tokens = j.value("max_output_tokens", c.max_output_tokens);
  c.synthesis = j.value("synthesis", "template") == "model" ? SynthesisMode::Model : SynthesisMode::Template;
  return c;
}

void to_json(json& j, const EvaluationRun& run) {
  json tasks = json::array();
  for (const auto& t : run.tasks) {
    tasks.push_back({{"task_id", t.task_id},
                     {"item_id", t.item_id},
                     {"state", task_state_name(t.state)},
                     {"attempts", t.attempts},
                     {"last_violations", violation_names(t.last_violations)}});
  }
  j = {{"run_id", run.run_id},
       {"doc_id", run.doc_id},
       {"state", run_state_name(run.state)},
       {"tasks", tasks},
       {"started_at", optional_time(run.started_at)},
       {"finished_at", optional_time(run.finished_at)},
       {"config", to_json(run.config)},
       {"failure", run.failure.empty() ? json() : json(run.failure)},
       {"failure_code", run.failure_code.empty() ? json() : json(run.failure_code)}};
}

void from_json(const json& j, EvaluationRun& run) {
  run.run_id = j.at("run_id").get<std::string>();
  run.doc_id = j.at("doc_id").get<std::string>();
  run.state = parse_run_state(j.at("state").get<std::string>());
  run.tasks.clear();
  for (const auto& t : j.at("tasks")) {
    EvaluationTask task;
    task.task_id = t.at("task_id").get<std::string>();
    task.item_id = t.at("item_id").get<int>();
    task.state = parse_task_state(t.at("state").get<std::string>());
    task.attempts = t.at("attempts").get<int>();
    for (const auto& v : t.value("last_violations", std::vector<std::string>{}))
      task.last_violations.push_back(parse_violation(v));
    run.tasks.push_back(std::move(task));
  }
  run.started_at = read_optional_time(j, "started_at");
  run.finished_at = read_optional_time(j, "finished_at");
  run.config = run_config_from_json(j.value("config", json::object()));
  const auto failure = j.find("failure");
  run.failure = failure != j.end() && failure->is_string() ? failure->get<std::string>() : std::string();
  const auto failure_code = j.find("failure_code");
  run.failure_code =
      failure_code != j.end() && failure_code->is_string() ? failure_code->get<std::string>() : std::string();
}

json report_to_json(const EvaluationReport& report, const ChecklistRegistry& registry) {
  json items = json::array();
  for (const auto& e : report.items) {
    json item = e;
    const auto& def = registry.item(e.item_id);
    item["society"] = society_name(def.society);
    item["title"] = def.title;
    items.push_back(std::move(item));
  }
  json societies = json::array();
  for (const auto& s : report.societies) {
    societies.push_back({{"name", society_name(s.society)},
                         {"display_name", society_display_name(s.society)},
                         {"mean", optional_number(s.mean_score)},
                         {"scored", s.items_scored},
                         {"failed", s.items_failed}});
  }
  return {{"schema_version", kReportSchemaVersion},
          {"run_id", report.run_id},
          {"doc_id", report.doc_id},
          {"document_title", report.document_title},
          {"registry_version", report.registry_version},
          {"items", items},
          {"societies", societies},
          {"overall", optional_number(report.overall_mean)},
          {"degenerate", report.degenerate},
          {"summary", report.narrative_summary},
          {"summary_fallback", report.summary_fallback},
          {"timestamps",
           {{"started_at", optional_time(report.started_at)},
            {"finished_at", optional_time(report.finished_at)},
            {"generated_at", format_timestamp(report.generated_at)}}}};
}

EvaluationReport report_from_json(const json& j) {
  if (j.value("schema_version", "") != kReportSchemaVersion)
    throw Error(ErrorCode::schema_error, "unsupported report schema version");
  EvaluationReport r;
  r.run_id = j.at("run_id").get<std::string>();
  r.doc_id = j.at("doc_id").get<std::string>();
  r.document_title = j.value("document_title", "");
  r.registry_version = j.at("registry_version").get<std::string>();
  r.items = j.at("items").get<std::vector<ItemEvaluation>>();
  for (const auto& s : j.at("societies")) {
    const auto society = parse_society(s.at("name").get<std::string>());
    if (!society) throw Error(ErrorCode::schema_error, "unknown society in report");
    r.societies.push_back({*society, read_optional_number(s, "mean"), s.at("scored").get<std::size_t>(),
                           s.at("failed").get<std::size_t>()});
  }
  r.overall_mean = read_optional_number(j, "overall");
  r.degenerate = j.at("degenerate").get<bool>();
  r.narrative_summary = j.at("summary").get<std::string>();
  r.summary_fallback = j.value("summary_fallback", false);
  const auto& ts = j.at("timestamps");
  r.started_at = read_optional_time(ts, "started_at");
  r.finished_at = read_optional_time(ts, "finished_at");
  r.generated_at = parse_timestamp(ts.at("generated_at").get<std::string>());
  return r;
}

std::string serialize_report(const EvaluationReport& report, const ChecklistRegistry& registry) {
  return report_to_json(report, registry).dump(2) + "\n";
}

void to_json(json& j, const ProgressEvent& e) {
  j = {{"seq", e.seq},
       {"run_id", e.run_id},
       {"task_id", e.task_id ? json(*e.task_id) : json()},
       {"state", e.state},
       {"at", format_timestamp(e.at)}};
}

void from_json(const json& j, ProgressEvent& e) {
  e.seq = j.at("seq").get<std::uint64_t>();
  e.run_id = j.at("run_id").get<std::string>();
  e.task_id = j.at("task_id").is_null() ? std::nullopt : std::optional<std::string>(j.at("task_id").get<std::string>());
  e.state = j.at("state").get<std::string>();
  e.at = parse_timestamp(j.at("at").get<std::string>());
}

std::vector<EvaluationTask> plan_tasks(const ChecklistRegistry& registry) {
  std::vector<EvaluationTask> tasks;
  for (const auto& item : registry.items()) {
    std::ostringstream id;
    id << "task-" << std::setw(2) << std::setfill('0') << item.id;
    tasks.push_back({id.str(), item.id, TaskState::pending, 0, {}});
  }
  return tasks;
}

Aggregates aggregate(const std::vector<ItemEvaluation>& evaluations, const ChecklistRegistry& registry) {
  Aggregates out;
  double total = 0;
  std::size_t scored = 0;
  for (Society society : kAllSocieties) {
    SocietyAggregate agg;
    agg.society = society;
    double sum = 0;
    for (const auto& e : evaluations) {
      if (registry.item(e.item_id).society != society) continue;
      if (e.status == EvalStatus::ok && e.score) {
        sum += *e.score;
        ++agg.items_scored;
      } else {
        ++agg.items_failed;
      }
    }
    if (agg.items_scored) agg.mean_score = sum / static_cast<double>(agg.items_scored);
    total += sum;
    scored += agg.items_scored;
    out.societies.push_back(agg);
  }
  if (scored) out.overall_mean = total / static_cast<double>(scored);
  return out;
}

std::string template_summary(const std::vector<ItemEvaluation>& evaluations, const Aggregates& aggregates,
                             const ChecklistRegistry& registry) {
  std::size_t scored = 0;
  std::vector<int> failed;
  std::vector<const ItemEvaluation*> ok;
  for (const auto& e : evaluations) {
    if (e.status == EvalStatus::ok && e.score) {
      ++scored;
      ok.push_back(&e);
    } else {
      failed.push_back(e.item_id);
    }
  }

  std::ostringstream out;
  if (aggregates.overall_mean) {
    out << "Overall mean score: " << fixed2(*aggregates.overall_mean) << " / 5 over " << scored << " scored items";
  } else {
    out << "Overall mean score: n/a (no item could be scored)";
  }
  out << " (" << failed.size() << " failed).\n";
  out << "Society means:\n";
  for (const auto& s : aggregates.societies) {
    out << "- " << society_display_name(s.society) << ": "
        << (s.mean_score ? fixed2(*s.mean_score) : std::string("n/a")) << " (" << s.items_scored << " scored, "
        << s.items_failed << " failed)\n";
  }
  std::stable_sort(ok.begin(), ok.end(), [](const ItemEvaluation* a, const ItemEvaluation* b) {
    return *a->score != *b->score ? *a->score < *b->score : a->item_id < b->item_id;
  });
  if (!ok.empty()) {
    out << "Lowest-scoring items:\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(3, ok.size()); ++i) {
      const auto& e = *ok[i];
      out << "- Item " << e.item_id << " (" << registry.item(e.item_id).title << "): " << *e.score << " - "
          << ScoreScale::label(*e.score) << "\n";
    }
  }
  if (!failed.empty()) {
    std::sort(failed.begin(), failed.end());
    out << "Items that could not be scored:";
    for (std::size_t i = 0; i < failed.size(); ++i) out << (i ? ", " : " ") << failed[i];
    out << "\n";
  }
  return out.str();
}

EvaluationReport synthesize_report(const EvaluationRun& run, const std::vector<ItemEvaluation>& evaluations,
                                   const Aggregates& aggregates, const ChecklistRegistry& registry,
                                   llm::ChatProvider* provider, Clock& clock, std::string document_title) {
  EvaluationReport report;
  report.run_id = run.run_id;
  report.doc_id = run.doc_id;
  report.document_title = std::move(document_title);
  report.registry_version = registry.version();
  report.items = evaluations;
  std::sort(report.items.begin(), report.items.end(),
            [](const ItemEvaluation& a, const ItemEvaluation& b) { return a.item_id < b.item_id; });
  report.societies = aggregates.societies;
  report.overall_mean = aggregates.overall_mean;
  report.degenerate = !aggregates.overall_mean.has_value();
  report.started_at = run.started_at;
  report.finished_at = run.finished_at;

  if (run.config.synthesis == SynthesisMode::Model && provider) {
    std::ostringstream user;
    user << "Per-item results for the manuscript \"" << report.document_title << "\":\n";
    for (const auto& e : report.items) {
      const auto& def = registry.item(e.item_id);
      user << "Item " << e.item_id << " (" << def.title << ", " << society_display_name(def.society) << "): "
           << (e.score ? std::to_string(*e.score) : std::string("not scored")) << " - " << e.feedback << "\n";
    }
    llm::ChatRequest request;
    request.model_name = run.config.model_name;
    request.temperature = run.config.temperature;
    request.max_output_tokens = run.config.max_output_tokens;
    request.request_tag = std::string(kSynthesisTag);
    request.messages.push_back(
        {llm::Role::System,
         "You write the summary of a PRISMA 2020 compliance evaluation of a systematic literature review. "
         "Summarise strengths, the weakest reporting items and the most important fixes in under 250 words.",
         {}, {}, {}});
    request.messages.push_back({llm::Role::User, user.str(), {}, {}, {}});
    try {
      const auto response = provider->complete(request);
      if (!text::trim(response.content).empty()) report.narrative_summary = response.content;
    } catch (const Error& e) {
      spdlog::warn("report synthesis failed, using template summary: {}", e.what());
    }
    if (report.narrative_summary.empty()) report.summary_fallback = true;
  }
  if (report.narrative_summary.empty()) report.narrative_summary = template_summary(report.items, aggregates, registry);
  report.generated_at = stamp(clock);
  return report;
}

RunOutcome execute_run(const RunRequest& request, RunCollaborators collaborators, const RunObserver& observer) {
  if (!request.document || request.document->sections.empty())
    throw Error(ErrorCode::precondition_failed, "document missing");
  if (!request.registry) throw Error(ErrorCode::precondition_failed, "registry missing");
  const auto& doc = *request.document;
  const auto& registry = *request.registry;
  auto& clock = collaborators.clock;

  RunOutcome outcome;
  auto& run = outcome.run;
  run.run_id = request.run_id;
  run.doc_id = doc.doc_id;
  run.config = request.config;
  run.tasks = plan_tasks(registry);
  run.started_at = stamp(clock);

  std::mutex state_mutex;
  std::uint64_t seq = 0;
  std::string failure;
  ErrorCode failure_code = ErrorCode::internal_error;
  std::atomic<bool> abort{false};

  // Callers hold state_mutex.
  auto emit = [&](std::optional<std::string> task_id, std::string_view state) {
    ProgressEvent event{++seq, run.run_id, std::move(task_id), std::string(state), stamp(clock)};
    if (observer.on_event) observer.on_event(event);
    if (observer.on_run_update) observer.on_run_update(run);
  };
  auto fail_run = [&](ErrorCode code, const std::string& why) {
    if (abort.exchange(true)) return;
    failure = why;
    failure_code = code;
  };

  try {
    std::lock_guard lock(state_mutex);
    run.state = RunState::evaluating;
    emit(std::nullopt, run_state_name(run.state));
  } catch (const Error& e) {
    fail_run(e.code(), e.what());
  }

  const auto& items = registry.items();
  std::vector<std::optional<ItemEvaluation>> results(items.size());
  std::atomic<std::size_t> next{0};

  AgentRunOptions agent_options;
  agent_options.max_attempts = 1 + std::max(0, run.config.retry_budget);
  agent_options.excerpt_budget = run.config.excerpt_budget;
  agent_options.thresholds = run.config.thresholds;
  agent_options.model_name = run.config.model_name;
  agent_options.temperature = run.config.temperature;
  agent_options.max_output_tokens = run.config.max_output_tokens;

  auto worker = [&] {
    while (!abort.load()) {
      const std::size_t index = next.fetch_add(1);
      if (index >= items.size()) return;
      auto& task = run.tasks[index];
      AgentSpec spec{items[index], std::string(kPromptTemplateId), run.config.max_tool_calls,
                     std::string(kOutputSchemaVersion)};
      try {
        auto evaluation = run_item_agent(
            spec, doc, {collaborators.provider, collaborators.search}, agent_options,
            [&](int attempt, const std::vector<Violation>& prior) {
              std::lock_guard lock(state_mutex);
              task.state = attempt == 1 ? TaskState::running : TaskState::retrying;
              task.attempts = attempt;
              task.last_violations = prior;
              emit(task.task_id, task_state_name(task.state));
            });
        std::lock_guard lock(state_mutex);
        task.state = evaluation.status == EvalStatus::ok ? TaskState::done : TaskState::failed;
        task.attempts = evaluation.attempts;
        task.last_violations = evaluation.violations;
        results[index] = std::move(evaluation);
        emit(task.task_id, task_state_name(task.state));
      } catch (const std::exception& e) {
        std::lock_guard lock(state_mutex);
        const auto* error = dynamic_cast<const Error*>(&e);
        fail_run(error ? error->code() : ErrorCode::internal_error,
                 "item " + std::to_string(task.item_id) + ": " + e.what());
        task.state = TaskState::failed;
        try {
          emit(task.task_id, task_state_name(task.state));
        } catch (const std::exception&) {
        }
      }
    }
  };

  {
    const std::size_t workers =
        std::min<std::size_t>(items.size(), static_cast<std::size_t>(std::max(1, run.config.max_parallel)));
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  }

  for (auto& r : results) {
    if (r) outcome.evaluations.push_back(std::move(*r));
  }

  std::lock_guard lock(state_mutex);
  try {
    if (!abort.load()) {
      run.state = RunState::synthesizing;
      emit(std::nullopt, run_state_name(run.state));
      const auto aggregates = aggregate(outcome.evaluations, registry);
      run.finished_at = stamp(clock);
      outcome.report = synthesize_report(run, outcome.evaluations, aggregates, registry, &collaborators.provider,
                                         clock, doc.title);
      if (observer.on_report) observer.on_report(*outcome.report);
      run.state = RunState::complete;
      emit(std::nullopt, run_state_name(run.state));
      return outcome;
    }
  } catch (const Error& e) {
    fail_run(e.code(), e.what());
  } catch (const std::exception& e) {
    fail_run(ErrorCode::internal_error, e.what());
  }

  outcome.report.reset();
  run.state = RunState::failed;
  run.failure = failure;
  run.failure_code = std::string(code_name(failure_code));
  if (!run.finished_at) run.finished_at = stamp(clock);
  spdlog::error("run {} failed: {}", run.run_id, failure);
  try {
    emit(std::nullopt, run_state_name(run.state));
  } catch (const std::exception&) {
  }
  return outcome;
}

}  // namespace slr
