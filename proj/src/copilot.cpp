#include "slr/copilot.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "slr/errors.hpp"
#include "slr/text.hpp"

namespace slr {

using nlohmann::json;

std::string_view turn_role_name(TurnRole role) {
  switch (role) {
    case TurnRole::User: return "user";
    case TurnRole::Assistant: return "assistant";
    case TurnRole::Tool: return "tool";
  }
  return "user";
}

namespace {

TurnRole parse_turn_role(std::string_view name) {
  for (auto r : {TurnRole::User, TurnRole::Assistant, TurnRole::Tool}) {
    if (turn_role_name(r) == name) return r;
  }
  throw Error(ErrorCode::parse_error, "unknown turn role: " + std::string(name));
}

TimePoint stamp(const Clock& clock) { return std::chrono::floor<Millis>(clock.now()); }

std::string fixed2(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << v;
  return out.str();
}

}  // namespace

void to_json(json& j, const ConversationSession& s) {
  json history = json::array();
  for (const auto& t : s.history) {
    json turn = {{"role", turn_role_name(t.role)}, {"content", t.content}, {"at", format_timestamp(t.at)}};
    if (t.role == TurnRole::Tool) turn["tool_name"] = t.tool_name;
    history.push_back(std::move(turn));
  }
  j = {{"session_id", s.session_id},
       {"run_id", s.run_id},
       {"seed", s.seed},
       {"history", history},
       {"context_refs",
        {{"run_id", s.context_refs.run_id},
         {"doc_id", s.context_refs.doc_id},
         {"registry_version", s.context_refs.registry_version}}},
       {"budget",
        {{"max_context_chars", s.budget.max_context_chars}, {"excerpt_budget", s.budget.excerpt_budget}}},
       {"created_at", format_timestamp(s.created_at)}};
}

void from_json(const json& j, ConversationSession& s) {
  s.session_id = j.at("session_id").get<std::string>();
  s.run_id = j.at("run_id").get<std::string>();
  s.seed = j.at("seed").get<std::string>();
  s.history.clear();
  for (const auto& t : j.at("history")) {
    s.history.push_back({parse_turn_role(t.at("role").get<std::string>()), t.at("content").get<std::string>(),
                         parse_timestamp(t.at("at").get<std::string>()), t.value("tool_name", "")});
  }
  const auto& refs = j.at("context_refs");
  s.context_refs = {refs.at("run_id").get<std::string>(), refs.at("doc_id").get<std::string>(),
                    refs.at("registry_version").get<std::string>()};
  const auto& budget = j.at("budget");
  s.budget = {budget.at("max_context_chars").get<std::size_t>(), budget.at("excerpt_budget").get<std::size_t>()};
  s.created_at = parse_timestamp(j.at("created_at").get<std::string>());
}

std::string seed_message(const EvaluationReport& report, const ChecklistRegistry& registry) {
  std::ostringstream out;
  out << "You are a research co-pilot helping the authors of a systematic literature review improve its "
         "PRISMA 2020 compliance. Ground every answer in the evaluation below, the manuscript excerpts supplied "
         "with each question and the checklist. You may search arXiv to suggest papers or check citations.\n\n";
  out << "Checklist version: " << report.registry_version << "\n";
  out << "Manuscript: " << (report.document_title.empty() ? "(untitled)" : report.document_title) << "\n";
  out << "Overall mean score: " << (report.overall_mean ? fixed2(*report.overall_mean) : "n/a") << " / 5\n";
  out << "Society means:\n";
  for (const auto& s : report.societies) {
    out << "- " << society_display_name(s.society) << ": " << (s.mean_score ? fixed2(*s.mean_score) : "n/a") << " ("
        << s.items_scored << " scored, " << s.items_failed << " failed)\n";
  }
  std::vector<const ItemEvaluation*> scored;
  for (const auto& e : report.items) {
    if (e.score) scored.push_back(&e);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const ItemEvaluation* a, const ItemEvaluation* b) {
    return *a->score != *b->score ? *a->score < *b->score : a->item_id < b->item_id;
  });
  out << "Lowest-scoring items:\n";
  for (std::size_t i = 0; i < std::min<std::size_t>(5, scored.size()); ++i) {
    const auto& e = *scored[i];
    out << "- Item " << e.item_id << " (" << registry.item(e.item_id).title << "): " << *e.score << " - "
        << e.feedback << "\n";
  }
  for (const auto& e : report.items) {
    if (e.status == EvalStatus::failed)
      out << "- Item " << e.item_id << " (" << registry.item(e.item_id).title << "): not scored\n";
  }
  out << "\nEvaluation summary:\n" << report.narrative_summary;
  return out.str();
}

ConversationSession start_session(const EvaluationRun& run, const EvaluationReport* report,
                                  const ChecklistRegistry& registry, std::string session_id, const Clock& clock,
                                  TokenBudgetPolicy budget) {
  if (run.state != RunState::complete || !report)
    throw Error(ErrorCode::not_ready, "run " + run.run_id + " is not complete",
                {{"state", run_state_name(run.state)}});
  ConversationSession session;
  session.session_id = std::move(session_id);
  session.run_id = run.run_id;
  session.seed = seed_message(*report, registry);
  session.context_refs = {report->run_id, report->doc_id, report->registry_version};
  session.budget = budget;
  session.created_at = stamp(clock);
  return session;
}

std::string_view confidence_name(CitationConfidence c) {
  switch (c) {
    case CitationConfidence::matched: return "matched";
    case CitationConfidence::ambiguous: return "ambiguous";
    case CitationConfidence::not_found: return "not_found";
  }
  return "not_found";
}

json to_json(const CitationVerdict& v) {
  return {{"reference", v.reference_string},
          {"matched_entry", v.matched_entry ? json(*v.matched_entry) : json()},
          {"confidence", confidence_name(v.confidence)},
          {"overlap", v.overlap},
          {"rationale", v.rationale}};
}

std::string citation_title_span(std::string_view reference) {
  // Quoted passages, straight or curly quotes.
  std::string best;
  const std::vector<std::pair<std::string_view, std::string_view>> quotes{{"\"", "\""}, {"“", "”"}};
  for (const auto& [open, close] : quotes) {
    std::size_t at = 0;
    while ((at = reference.find(open, at)) != std::string_view::npos) {
      const auto begin = at + open.size();
      const auto end = reference.find(close, begin);
      if (end == std::string_view::npos) break;
      auto span = std::string(text::trim(reference.substr(begin, end - begin)));
      while (!span.empty() && (span.back() == '.' || span.back() == ',')) span.pop_back();
      if (span.size() > best.size()) best = span;
      at = end + close.size();
    }
  }
  if (!text::word_tokens(best).empty()) return best;

  // Otherwise the period-delimited segment with the most words.
  std::size_t best_words = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= reference.size(); ++i) {
    const bool boundary = i == reference.size() || ((reference[i] == '.' || reference[i] == '?') &&
                                                    (i + 1 == reference.size() || reference[i + 1] == ' '));
    if (!boundary) continue;
    const auto segment = text::trim(reference.substr(start, i - start));
    const auto words = text::word_tokens(segment).size();
    if (words > best_words) {
      best_words = words;
      best = std::string(segment);
    }
    start = i + 1;
  }
  return best.empty() ? std::string(text::trim(reference)) : best;
}

double token_overlap(std::string_view reference_title, std::string_view candidate_title) {
  const auto r_tokens = text::word_tokens(reference_title);
  const auto c_tokens = text::word_tokens(candidate_title);
  const std::set<std::string> r(r_tokens.begin(), r_tokens.end());
  const std::set<std::string> c(c_tokens.begin(), c_tokens.end());
  if (r.empty() || c.empty()) return 0.0;
  std::size_t shared = 0;
  for (const auto& t : r) shared += c.count(t);
  return static_cast<double>(shared) / static_cast<double>(std::max(r.size(), c.size()));
}

CitationConfidence classify_overlap(double overlap, const CitationThresholds& thresholds) {
  if (overlap >= thresholds.matched) return CitationConfidence::matched;
  if (overlap >= thresholds.ambiguous) return CitationConfidence::ambiguous;
  return CitationConfidence::not_found;
}

CitationVerdict verify_citation(std::string_view reference, arxiv::ScholarlySearch& search,
                                const CitationThresholds& thresholds) {
  if (text::trim(reference).empty()) throw Error(ErrorCode::invalid_request, "reference string is empty");
  CitationVerdict verdict;
  verdict.reference_string = std::string(reference);
  const auto title = citation_title_span(reference);

  arxiv::SearchQuery query;
  query.mode = arxiv::BooleanMode::Or;
  for (const auto& token : text::word_tokens(title)) {
    if (query.terms.size() == 8) break;
    if (std::none_of(query.terms.begin(), query.terms.end(), [&](const auto& t) { return t.value == token; }))
      query.terms.push_back({arxiv::Field::Title, token});
  }
  if (query.terms.empty()) {
    verdict.rationale = "no searchable title words in the reference";
    return verdict;
  }
  const auto candidates = search.search(query);

  const arxiv::ArxivEntry* best = nullptr;
  for (const auto& candidate : candidates) {
    const double overlap = token_overlap(title, candidate.title);
    if (!best || overlap > verdict.overlap) {
      best = &candidate;
      verdict.overlap = overlap;
    }
  }
  verdict.confidence = best ? classify_overlap(verdict.overlap, thresholds) : CitationConfidence::not_found;
  std::ostringstream why;
  why << "title span \"" << title << "\"; " << candidates.size() << " candidate(s)";
  if (best) why << "; best \"" << best->title << "\" (" << best->entry_id << ") overlap " << fixed2(verdict.overlap);
  verdict.rationale = why.str();
  if (verdict.confidence != CitationConfidence::not_found) verdict.matched_entry = *best;
  return verdict;
}

llm::ChatRequest Copilot::assemble(const ConversationSession& session, std::string_view user_message,
                                   const ParsedDocument& doc) const {
  std::vector<std::string> keywords;
  for (auto& token : text::word_tokens(user_message)) {
    if (token.size() >= 4 && std::find(keywords.begin(), keywords.end(), token) == keywords.end())
      keywords.push_back(std::move(token));
  }
  std::string current(user_message);
  if (!keywords.empty() && !doc.sections.empty()) {
    const auto bundle = excerpts_for_keywords(doc, keywords, session.budget.excerpt_budget);
    if (!bundle.excerpts.empty()) {
      current += "\n\nManuscript excerpts relevant to this question:";
      for (const auto& e : bundle.excerpts) {
        current += "\n[Section: " + (e.section_heading.empty() ? std::string("(untitled)") : e.section_heading) +
                   "]\n" + e.text;
      }
    }
  }

  // Keep the newest turns that fit next to the seed and the new message.
  std::size_t used = session.seed.size() + current.size();
  std::vector<const ChatTurn*> kept;
  for (auto it = session.history.rbegin(); it != session.history.rend(); ++it) {
    if (it->role == TurnRole::Tool) continue;
    if (used + it->content.size() > session.budget.max_context_chars) break;
    used += it->content.size();
    kept.push_back(&*it);
  }
  std::reverse(kept.begin(), kept.end());
  while (!kept.empty() && kept.front()->role != TurnRole::User) kept.erase(kept.begin());

  llm::ChatRequest request;
  request.model_name = config_.model_name;
  request.temperature = config_.temperature;
  request.max_output_tokens = config_.max_output_tokens;
  request.messages.push_back({llm::Role::System, session.seed, {}, {}, {}});
  for (const auto* turn : kept) {
    request.messages.push_back(
        {turn->role == TurnRole::User ? llm::Role::User : llm::Role::Assistant, turn->content, {}, {}, {}});
  }
  request.messages.push_back({llm::Role::User, std::move(current), {}, {}, {}});
  if (config_.max_tool_calls > 0) {
    request.tools.push_back(
        {std::string(arxiv::kSearchToolName), arxiv::search_tool_description(), arxiv::search_tool_parameters()});
  }
  return request;
}

std::string Copilot::respond(ConversationSession& session, std::string_view user_message, const ParsedDocument& doc,
                             SessionStore* store) {
  if (text::trim(user_message).empty()) throw Error(ErrorCode::invalid_request, "message is empty");
  {
    std::lock_guard lock(busy_mutex_);
    if (!busy_.insert(session.session_id).second)
      throw Error(ErrorCode::session_busy, "session " + session.session_id + " already has a reply in progress");
  }
  struct Release {
    Copilot& self;
    const std::string& id;
    ~Release() {
      std::lock_guard lock(self.busy_mutex_);
      self.busy_.erase(id);
    }
  } release{*this, session.session_id};

  const auto user_turns = std::count_if(session.history.begin(), session.history.end(),
                                        [](const ChatTurn& t) { return t.role == TurnRole::User; });
  const std::string base_tag = "chat-" + session.session_id + "-" + std::to_string(user_turns + 1);

  std::vector<ChatTurn> added{{TurnRole::User, std::string(user_message), stamp(clock_), {}}};
  auto request = assemble(session, user_message, doc);
  const auto tools = request.tools;
  int tool_calls_used = 0;
  std::string reply;
  for (int turn = 1;; ++turn) {
    request.request_tag = turn == 1 ? base_tag : base_tag + "-turn-" + std::to_string(turn);
    request.tools = tool_calls_used < config_.max_tool_calls ? tools : std::vector<llm::ToolDeclaration>{};
    const auto response = provider_.complete(request);
    if (response.tool_calls.empty() || tool_calls_used >= config_.max_tool_calls) {
      reply = response.content;
      break;
    }
    request.messages.push_back({llm::Role::Assistant, response.content, response.tool_calls, {}, {}});
    for (const auto& call : response.tool_calls) {
      std::string content;
      if (call.name != arxiv::kSearchToolName) {
        content = json{{"error", "unknown tool " + call.name}}.dump();
      } else if (tool_calls_used >= config_.max_tool_calls) {
        content = json{{"error", "tool call budget exhausted"}}.dump();
      } else {
        ++tool_calls_used;
        try {
          content = arxiv::format_tool_result(search_.search(arxiv::query_from_tool_arguments(call.arguments)));
        } catch (const Error& e) {
          spdlog::warn("copilot tool call failed: {}", e.what());
          content = json{{"error", e.what()}}.dump();
        }
      }
      request.messages.push_back({llm::Role::Tool, content, {}, call.id, call.name});
      added.push_back({TurnRole::Tool, content, stamp(clock_), call.name});
    }
  }
  added.push_back({TurnRole::Assistant, reply, stamp(clock_), {}});

  ConversationSession updated = session;
  updated.history.insert(updated.history.end(), added.begin(), added.end());
  if (store) store->save_session(updated);
  session = std::move(updated);
  return reply;
}

}  // namespace slr
