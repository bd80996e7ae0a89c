#include "slr/agent.hpp"

#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

#include "slr/errors.hpp"
#include "slr/text.hpp"

namespace slr {

using nlohmann::json;

std::string_view violation_name(Violation v) {
  switch (v) {
    case Violation::unparseable: return "unparseable";
    case Violation::score_out_of_range: return "score_out_of_range";
    case Violation::feedback_too_short: return "feedback_too_short";
    case Violation::quote_not_in_document: return "quote_not_in_document";
  }
  return "unparseable";
}

Violation parse_violation(std::string_view name) {
  for (auto v : {Violation::unparseable, Violation::score_out_of_range, Violation::feedback_too_short,
                 Violation::quote_not_in_document}) {
    if (violation_name(v) == name) return v;
  }
  throw Error(ErrorCode::parse_error, "unknown violation code: " + std::string(name));
}

std::string_view status_name(EvalStatus s) { return s == EvalStatus::ok ? "ok" : "failed"; }

namespace {

/// End of the balanced object starting at `open`, honouring string literals.
std::optional<std::size_t> matching_brace(std::string_view raw, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < raw.size(); ++i) {
    const char c = raw[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::nullopt;
}

std::string violations_text(const std::vector<Violation>& violations) {
  std::vector<std::string> names;
  for (auto v : violations) names.emplace_back(violation_name(v));
  return text::join(names, ", ");
}

}  // namespace

std::optional<AgentOutput> parse_agent_output(std::string_view raw) {
  for (std::size_t open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    const auto close = matching_brace(raw, open);
    if (!close) continue;
    json object;
    try {
      object = json::parse(raw.substr(open, *close - open + 1));
    } catch (const json::parse_error&) {
      continue;
    }
    if (!object.is_object()) continue;

    AgentOutput out;
    if (const auto score = object.find("score"); score != object.end() && score->is_number())
      out.score = score->get<double>();
    if (const auto feedback = object.find("feedback"); feedback != object.end() && feedback->is_string())
      out.feedback = feedback->get<std::string>();
    if (const auto quotes = object.find("evidence_quotes"); quotes != object.end() && quotes->is_array()) {
      for (const auto& q : *quotes) {
        if (q.is_string()) out.evidence_quotes.push_back(q.get<std::string>());
      }
    }
    return out;
  }
  return std::nullopt;
}

ValidationVerdict validate_evaluation(const std::optional<AgentOutput>& candidate, const ParsedDocument& doc,
                                      const Thresholds& thresholds) {
  ValidationVerdict verdict;
  if (!candidate) {
    verdict.violations.push_back(Violation::unparseable);
    return verdict;
  }
  const auto& out = *candidate;
  const bool score_ok = out.score && std::isfinite(*out.score) && std::floor(*out.score) == *out.score &&
                        *out.score >= ScoreScale::kMin && *out.score <= ScoreScale::kMax;
  if (!score_ok) verdict.violations.push_back(Violation::score_out_of_range);
  if (text::trim(out.feedback).size() < thresholds.min_feedback_chars)
    verdict.violations.push_back(Violation::feedback_too_short);

  const bool waived = score_ok && *out.score == 0;
  if (!waived) {
    const text::NormalizedText haystack(doc.full_text);
    bool all_found = !out.evidence_quotes.empty();
    for (const auto& quote : out.evidence_quotes) {
      auto span = haystack.find_verbatim(quote);
      if (!span) {
        all_found = false;
        break;
      }
      verdict.verbatim_quotes.push_back(std::move(*span));
    }
    if (!all_found) verdict.violations.push_back(Violation::quote_not_in_document);
  }
  verdict.accepted = verdict.violations.empty();
  if (!verdict.accepted) verdict.verbatim_quotes.clear();
  return verdict;
}

void to_json(json& j, const ItemEvaluation& e) {
  std::vector<std::string> violations;
  for (auto v : e.violations) violations.emplace_back(violation_name(v));
  j = {{"id", e.item_id},
       {"score", e.score ? json(*e.score) : json()},
       {"feedback", e.feedback},
       {"evidence_quotes", e.evidence_quotes},
       {"citations", e.citations_consulted},
       {"attempts", e.attempts},
       {"status", status_name(e.status)},
       {"agent_trace_id", e.agent_trace_id},
       {"violations", violations}};
}

void from_json(const json& j, ItemEvaluation& e) {
  e.item_id = j.at("id").get<int>();
  e.score = j.at("score").is_null() ? std::nullopt : std::optional<int>(j.at("score").get<int>());
  e.feedback = j.at("feedback").get<std::string>();
  e.evidence_quotes = j.at("evidence_quotes").get<std::vector<std::string>>();
  e.citations_consulted = j.at("citations").get<std::vector<std::string>>();
  e.attempts = j.at("attempts").get<int>();
  e.status = j.at("status").get<std::string>() == "ok" ? EvalStatus::ok : EvalStatus::failed;
  e.agent_trace_id = j.value("agent_trace_id", "");
  e.violations.clear();
  for (const auto& v : j.value("violations", std::vector<std::string>{})) e.violations.push_back(parse_violation(v));
}

llm::ChatRequest build_prompt(const AgentSpec& spec, const ExcerptBundle& bundle, const PromptOptions& options) {
  if (bundle.item_id != spec.item.id)
    throw Error(ErrorCode::precondition_failed, "excerpt bundle belongs to item " + std::to_string(bundle.item_id) +
                                                    ", agent evaluates item " + std::to_string(spec.item.id));
  const auto& item = spec.item;

  std::ostringstream system;
  system << "You are the PRISMA 2020 evaluation agent for checklist item " << item.id << ": " << item.title << " ("
         << society_display_name(item.society) << " society). You assess only this item.\n\n"
         << "Reporting requirement:\n" << item.guidance << "\n\n"
         << "Score the manuscript on this integer scale:\n";
  for (int level = ScoreScale::kMin; level <= ScoreScale::kMax; ++level)
    system << level << " = " << ScoreScale::label(level) << "\n";
  system << "\nWorked example:\n"
         << "Excerpt: " << item.exemplar.excerpt << "\n"
         << "Score: " << item.exemplar.score << "\n"
         << "Feedback: " << item.exemplar.feedback << "\n\n"
         << "Output schema (" << spec.output_schema_version << "): reply with exactly one JSON object\n"
         << R"({"score": <integer 0-5>, "feedback": "<assessment of at least 20 characters>", )"
         << R"("evidence_quotes": ["<verbatim quote from the manuscript>"]})" << "\n"
         << "Every evidence quote must be copied verbatim from the manuscript excerpts. A nonzero score needs at "
            "least one quote; a score of 0 needs none.\n";
  if (spec.max_tool_calls > 0) {
    system << "You may call the " << arxiv::kSearchToolName << " tool up to " << spec.max_tool_calls
           << " times to check related literature before answering.\n";
  }
  if (!options.prior_violations.empty()) {
    system << "\nA previous attempt at this item was rejected for: " << violations_text(options.prior_violations)
           << ". Avoid these problems in your answer.\n";
  }

  std::ostringstream user;
  user << "Manuscript: " << (options.document_title.empty() ? "(untitled)" : options.document_title) << "\n"
       << "Excerpts selected for item " << item.id << " (" << bundle.total_chars << " of " << options.excerpt_budget
       << " characters" << (bundle.truncated ? ", truncated" : "") << "):\n";
  if (bundle.excerpts.empty()) user << "\n(no manuscript text was found for this item)\n";
  for (std::size_t i = 0; i < bundle.excerpts.size(); ++i) {
    const auto& e = bundle.excerpts[i];
    user << "\n[Excerpt " << i + 1 << " | Section: " << (e.section_heading.empty() ? "(untitled)" : e.section_heading)
         << "]\n" << e.text << "\n";
  }

  llm::ChatRequest request;
  request.model_name = options.model_name;
  request.temperature = options.temperature;
  request.max_output_tokens = options.max_output_tokens;
  request.request_tag = options.request_tag;
  request.messages.push_back({llm::Role::System, system.str(), {}, {}, {}});
  request.messages.push_back({llm::Role::User, user.str(), {}, {}, {}});
  if (spec.max_tool_calls > 0) {
    request.tools.push_back(
        {std::string(arxiv::kSearchToolName), arxiv::search_tool_description(), arxiv::search_tool_parameters()});
  }
  return request;
}

std::string attempt_tag(int item_id, int attempt) {
  return "item-" + std::to_string(item_id) + "-attempt-" + std::to_string(attempt);
}

namespace {

struct AttemptResult {
  std::string raw;
  std::vector<std::string> citations;
};

std::string run_tool(const llm::ToolCall& call, arxiv::ScholarlySearch& search, std::vector<std::string>& citations) {
  if (call.name != arxiv::kSearchToolName) return json{{"error", "unknown tool " + call.name}}.dump();
  try {
    const auto entries = search.search(arxiv::query_from_tool_arguments(call.arguments));
    for (const auto& e : entries) {
      if (std::find(citations.begin(), citations.end(), e.entry_id) == citations.end())
        citations.push_back(e.entry_id);
    }
    return arxiv::format_tool_result(entries);
  } catch (const Error& e) {
    spdlog::warn("tool call {} failed: {}", call.name, e.what());
    return json{{"error", e.what()}}.dump();
  }
}

AttemptResult run_attempt(const AgentSpec& spec, llm::ChatRequest request, AgentCollaborators collaborators) {
  AttemptResult result;
  const std::string base_tag = request.request_tag;
  const auto tools = request.tools;
  int tool_calls_used = 0;
  for (int turn = 1;; ++turn) {
    request.request_tag = turn == 1 ? base_tag : base_tag + "-turn-" + std::to_string(turn);
    request.tools = tool_calls_used < spec.max_tool_calls ? tools : std::vector<llm::ToolDeclaration>{};
    const auto response = collaborators.provider.complete(request);
    if (response.tool_calls.empty() || tool_calls_used >= spec.max_tool_calls) {
      result.raw = response.content;
      return result;
    }
    request.messages.push_back({llm::Role::Assistant, response.content, response.tool_calls, {}, {}});
    for (const auto& call : response.tool_calls) {
      std::string content;
      if (tool_calls_used < spec.max_tool_calls) {
        content = run_tool(call, collaborators.search, result.citations);
        ++tool_calls_used;
      } else {
        content = json{{"error", "tool call budget exhausted"}}.dump();
      }
      request.messages.push_back({llm::Role::Tool, content, {}, call.id, call.name});
    }
  }
}

}  // namespace

ItemEvaluation run_item_agent(const AgentSpec& spec, const ParsedDocument& doc, AgentCollaborators collaborators,
                              const AgentRunOptions& options, const AttemptObserver& observer) {
  const auto bundle = section_excerpts(doc, spec.item, options.excerpt_budget);
  ItemEvaluation evaluation;
  evaluation.item_id = spec.item.id;

  std::vector<Violation> prior;
  const int max_attempts = std::max(1, options.max_attempts);
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (observer) observer(attempt, prior);
    PromptOptions prompt;
    prompt.model_name = options.model_name;
    prompt.temperature = options.temperature;
    prompt.max_output_tokens = options.max_output_tokens;
    prompt.request_tag = attempt_tag(spec.item.id, attempt);
    prompt.document_title = doc.title;
    prompt.excerpt_budget = options.excerpt_budget;
    prompt.prior_violations = prior;

    const auto result = run_attempt(spec, build_prompt(spec, bundle, prompt), collaborators);
    const auto parsed = parse_agent_output(result.raw);
    auto verdict = validate_evaluation(parsed, doc, options.thresholds);

    evaluation.attempts = attempt;
    evaluation.agent_trace_id = doc.doc_id.substr(0, 12) + "/" + prompt.request_tag;
    evaluation.citations_consulted = result.citations;
    evaluation.feedback = parsed ? parsed->feedback : std::string();
    if (verdict.accepted) {
      evaluation.status = EvalStatus::ok;
      evaluation.score = static_cast<int>(*parsed->score);
      evaluation.evidence_quotes = std::move(verdict.verbatim_quotes);
      evaluation.violations.clear();
      return evaluation;
    }
    evaluation.violations = verdict.violations;
    prior = verdict.violations;
  }
  evaluation.status = EvalStatus::failed;
  evaluation.score.reset();
  evaluation.evidence_quotes.clear();
  return evaluation;
}

}  // namespace slr
