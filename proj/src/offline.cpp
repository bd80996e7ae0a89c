#include "slr/offline.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <json.hpp>

#include "slr/text.hpp"

namespace slr {

namespace {

constexpr std::string_view kItemMarker = "checklist item ";
constexpr std::string_view kExcerptMarker = "\n[Excerpt ";

std::optional<int> item_from_system(std::string_view system) {
  const auto at = system.find(kItemMarker);
  if (at == std::string_view::npos) return std::nullopt;
  const char* begin = system.data() + at + kItemMarker.size();
  int id = 0;
  const auto [ptr, ec] = std::from_chars(begin, system.data() + system.size(), id);
  if (ec != std::errc() || ptr == begin) return std::nullopt;
  return id;
}

std::vector<std::string> excerpt_texts(std::string_view user) {
  std::vector<std::string> out;
  std::size_t at = user.find(kExcerptMarker);
  while (at != std::string_view::npos) {
    const auto header_end = user.find("]\n", at);
    if (header_end == std::string_view::npos) break;
    const auto next = user.find(kExcerptMarker, header_end);
    auto body = user.substr(header_end + 2, next == std::string_view::npos ? std::string_view::npos : next - header_end - 2);
    if (!body.empty() && body.back() == '\n') body.remove_suffix(1);
    out.emplace_back(body);
    at = next;
  }
  return out;
}

bool is_boundary(char c) { return c == '.' || c == '\n' || c == '?' || c == '!'; }

/// The sentence of `text` around byte `pos`, trimmed and cut at 160 bytes.
std::string sentence_around(std::string_view text, std::size_t pos) {
  std::size_t begin = pos;
  while (begin > 0 && !is_boundary(text[begin - 1])) --begin;
  std::size_t end = pos;
  while (end < text.size() && !is_boundary(text[end])) ++end;
  auto sentence = text::trim(text.substr(begin, end - begin));
  sentence = text::utf8_prefix(sentence, 160);
  return std::string(text::trim(sentence));
}

llm::ChatResponse evaluate_item(const ChecklistItem& item, std::string_view user) {
  const auto excerpts = excerpt_texts(user);
  nlohmann::json out;
  if (excerpts.empty()) {
    out = {{"score", 0},
           {"feedback", "The manuscript contains no text that addresses " + item.title + "."},
           {"evidence_quotes", nlohmann::json::array()}};
    return llm::ChatResponse::text(out.dump());
  }

  std::size_t hits = 0;
  std::string quote;
  std::string lowered_all;
  for (const auto& e : excerpts) lowered_all += text::to_lower(e) + "\n";
  for (const auto& keyword : item.keywords) {
    if (lowered_all.find(text::to_lower(keyword)) != std::string::npos) ++hits;
  }
  for (const auto& e : excerpts) {
    const auto lowered = text::to_lower(e);
    for (const auto& keyword : item.keywords) {
      const auto pos = lowered.find(text::to_lower(keyword));
      if (pos == std::string::npos) continue;
      quote = sentence_around(e, pos);
      if (!quote.empty()) break;
    }
    if (!quote.empty()) break;
  }
  if (quote.empty()) quote = sentence_around(excerpts.front(), 0);

  const int score = quote.empty() ? 0 : static_cast<int>(std::min<std::size_t>(5, 1 + hits));
  std::ostringstream feedback;
  feedback << "Offline heuristic assessment of " << item.title << ": " << hits << " of " << item.keywords.size()
           << " reporting cues found in the selected excerpts.";
  out = {{"score", score}, {"feedback", feedback.str()}, {"evidence_quotes", nlohmann::json::array()}};
  if (score > 0) out["evidence_quotes"].push_back(quote);
  return llm::ChatResponse::text(out.dump());
}

}  // namespace

llm::MockProvider::Responder offline_responder(const ChecklistRegistry& registry) {
  return [&registry](const llm::ChatRequest& request) {
    std::string_view system;
    std::string_view user;
    for (const auto& m : request.messages) {
      if (m.role == llm::Role::System && system.empty()) system = m.content;
      if (m.role == llm::Role::User) user = m.content;
    }
    if (const auto id = item_from_system(system)) {
      if (const auto* item = registry.find(*id)) return evaluate_item(*item, user);
    }
    return llm::ChatResponse::text(
        "Offline mode: no language model is connected, so this answer is a placeholder. The evaluation report "
        "lists each item's score, feedback and evidence quotes.");
  };
}

}  // namespace slr
