#include "slr/document.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

#include "slr/errors.hpp"
#include "slr/hashing.hpp"
#include "slr/text.hpp"

namespace slr {

std::string_view source_kind_name(SourceKind kind) {
  switch (kind) {
    case SourceKind::PlainText: return "plain-text";
    case SourceKind::Structured: return "structured";
    case SourceKind::RemoteExtracted: return "remote-extracted";
  }
  return "plain-text";
}

namespace {

SourceKind parse_source_kind(const std::string& name) {
  if (name == "structured") return SourceKind::Structured;
  if (name == "remote-extracted") return SourceKind::RemoteExtracted;
  return SourceKind::PlainText;
}

const std::set<std::string>& known_section_names() {
  static const std::set<std::string> names = {
      "abstract", "introduction", "background", "rationale", "objectives", "aims",
      "methods", "method", "methodology", "materials and methods", "methods and materials",
      "eligibility criteria", "information sources", "search strategy", "selection process",
      "data collection process", "data extraction", "data items", "risk of bias",
      "risk of bias assessment", "quality assessment", "synthesis methods", "statistical analysis",
      "results", "findings", "study selection", "study characteristics", "discussion",
      "limitations", "conclusion", "conclusions", "implications", "future work",
      "registration", "registration and protocol", "protocol", "funding", "support",
      "acknowledgements", "acknowledgments", "competing interests", "conflicts of interest",
      "conflict of interest", "declaration of competing interest", "data availability",
      "availability of data", "availability of data and materials", "references", "bibliography",
      "reference list", "works cited", "appendix", "supplementary material",
  };
  return names;
}

bool is_reference_heading(std::string_view heading) {
  const auto h = text::to_lower(text::trim(heading));
  return h == "references" || h == "bibliography" || h == "reference list" || h == "works cited";
}

struct Heading {
  std::string text;
  int level = 1;
};

std::size_t word_count(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

std::optional<Heading> classify_heading(std::string_view raw_line) {
  const auto line = text::trim(raw_line);
  if (line.empty() || line.size() > 100) return std::nullopt;
  const char last = line.back();
  const bool sentence_end = last == '.' || last == ',' || last == ';';

  if (line.front() == '#') {
    const auto hashes = line.find_first_not_of('#');
    if (hashes == std::string_view::npos || hashes > 6 || line[hashes] != ' ') return std::nullopt;
    const auto title = text::trim(line.substr(hashes));
    if (title.empty()) return std::nullopt;
    return Heading{std::string(title), static_cast<int>(hashes)};
  }

  static const std::regex numbered(R"(^(\d{1,2}(?:\.\d{1,2})*)\.?\s+(\S.*)$)");
  std::cmatch m;
  const std::string line_str(line);
  if (std::regex_match(line_str.c_str(), m, numbered)) {
    const std::string rest = m[2].str();
    if (std::isupper(static_cast<unsigned char>(rest.front())) && !sentence_end &&
        word_count(rest) <= 12) {
      const std::string number = m[1].str();
      const int level = 1 + static_cast<int>(std::count(number.begin(), number.end(), '.'));
      return Heading{rest, level};
    }
    return std::nullopt;
  }

  std::string name = text::to_lower(line);
  if (!name.empty() && name.back() == ':') name.pop_back();
  if (known_section_names().count(std::string(text::trim(name)))) {
    std::string heading(line);
    if (heading.back() == ':') heading.pop_back();
    return Heading{std::string(text::trim(heading)), 1};
  }

  std::size_t letters = 0;
  bool has_lower = false;
  for (char c : line) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalpha(u)) {
      ++letters;
      if (std::islower(u)) has_lower = true;
    }
  }
  if (letters >= 3 && !has_lower && !sentence_end && word_count(line) <= 10) {
    return Heading{std::string(line), 1};
  }
  return std::nullopt;
}

struct Line {
  std::size_t begin = 0;
  std::size_t end = 0;  ///< exclusive, before the newline
};

std::vector<Line> split_lines(std::string_view raw) {
  std::vector<Line> lines;
  std::size_t start = 0;
  while (start <= raw.size()) {
    const auto nl = raw.find('\n', start);
    const std::size_t end = nl == std::string_view::npos ? raw.size() : nl;
    lines.push_back({start, end});
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return lines;
}

std::vector<std::string> split_references(std::string_view body) {
  static const std::regex marker(R"(^\s*(\[\d+\]|\d+\.)\s+)");
  std::vector<std::string> lines;
  for (const auto& l : split_lines(body)) {
    const auto t = text::trim(body.substr(l.begin, l.end - l.begin));
    if (!t.empty()) lines.emplace_back(t);
  }
  const bool has_markers = std::any_of(lines.begin(), lines.end(),
                                       [](const std::string& l) { return std::regex_search(l, marker); });
  std::vector<std::string> refs;
  for (const auto& l : lines) {
    if (!has_markers || std::regex_search(l, marker) || refs.empty()) {
      refs.push_back(l);
    } else {
      refs.back() += " " + l;
    }
  }
  for (auto& r : refs) r = text::collapse_whitespace(r);
  return refs;
}

void rebuild_full_text(ParsedDocument& doc) {
  doc.full_text.clear();
  for (const auto& s : doc.sections) doc.full_text += s.body;
}

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::schema_error, "schema error at " + path + ": " + what, {{"path", path}});
}

}  // namespace

std::size_t ParsedDocument::section_offset(std::size_t index) const {
  std::size_t offset = 0;
  for (std::size_t i = 0; i < index && i < sections.size(); ++i) offset += sections[i].body.size();
  return offset;
}

void to_json(nlohmann::json& j, const ParsedDocument& doc) {
  nlohmann::json sections = nlohmann::json::array();
  for (const auto& s : doc.sections)
    sections.push_back({{"heading", s.heading}, {"level", s.level}, {"body", s.body}});
  j = {{"doc_id", doc.doc_id},
       {"title", doc.title},
       {"sections", sections},
       {"references", doc.references},
       {"full_text", doc.full_text},
       {"source_kind", source_kind_name(doc.source_kind)},
       {"metadata",
        {{"page_count", doc.metadata.page_count ? nlohmann::json(*doc.metadata.page_count) : nlohmann::json()},
         {"byte_size", doc.metadata.byte_size}}},
       {"structure_warning", doc.structure_warning}};
}

void from_json(const nlohmann::json& j, ParsedDocument& doc) {
  doc.doc_id = j.at("doc_id").get<std::string>();
  doc.title = j.at("title").get<std::string>();
  doc.sections.clear();
  for (const auto& s : j.at("sections"))
    doc.sections.push_back({s.at("heading").get<std::string>(), s.at("level").get<int>(),
                            s.at("body").get<std::string>()});
  doc.references = j.at("references").get<std::vector<std::string>>();
  doc.full_text = j.at("full_text").get<std::string>();
  doc.source_kind = parse_source_kind(j.at("source_kind").get<std::string>());
  const auto& meta = j.at("metadata");
  doc.metadata.page_count =
      meta.at("page_count").is_null() ? std::nullopt : std::optional<int>(meta.at("page_count").get<int>());
  doc.metadata.byte_size = meta.at("byte_size").get<std::size_t>();
  doc.structure_warning = j.value("structure_warning", false);
}

ParsedDocument ingest_text(std::string_view raw, std::optional<std::string> title_hint) {
  if (text::trim(raw).empty()) throw Error(ErrorCode::empty_document, "empty document");

  ParsedDocument doc;
  doc.doc_id = sha256_hex(raw);
  doc.source_kind = SourceKind::PlainText;
  doc.metadata.byte_size = raw.size();

  const auto lines = split_lines(raw);
  struct Found {
    std::size_t line;
    Heading heading;
  };
  std::vector<Found> headings;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (auto h = classify_heading(raw.substr(lines[i].begin, lines[i].end - lines[i].begin)))
      headings.push_back({i, std::move(*h)});
  }

  auto slice = [&](std::size_t from_line, std::size_t to_line) {
    if (from_line >= to_line) return std::string_view{};
    const std::size_t begin = lines[from_line].begin;
    const std::size_t end = lines[to_line - 1].end;
    return text::trim(raw.substr(begin, end - begin));
  };

  std::size_t first_content = 0;
  while (first_content < lines.size() &&
         text::trim(raw.substr(lines[first_content].begin, lines[first_content].end - lines[first_content].begin))
             .empty())
    ++first_content;

  if (headings.empty()) {
    doc.structure_warning = true;
    const auto first_line =
        text::trim(raw.substr(lines[first_content].begin, lines[first_content].end - lines[first_content].begin));
    doc.title = title_hint ? *title_hint : std::string(text::utf8_prefix(first_line, 160));
    doc.sections.push_back({"", 1, std::string(text::trim(raw)) + "\n"});
    rebuild_full_text(doc);
    return doc;
  }

  std::size_t preamble_start = first_content;
  if (title_hint) {
    doc.title = *title_hint;
  } else if (first_content < headings.front().line) {
    doc.title = std::string(
        text::trim(raw.substr(lines[first_content].begin, lines[first_content].end - lines[first_content].begin)));
    preamble_start = first_content + 1;
  }
  if (const auto preamble = slice(preamble_start, headings.front().line); !preamble.empty()) {
    doc.sections.push_back({"Front matter", 1, std::string(preamble) + "\n"});
  }

  for (std::size_t h = 0; h < headings.size(); ++h) {
    const std::size_t body_from = headings[h].line + 1;
    const std::size_t body_to = h + 1 < headings.size() ? headings[h + 1].line : lines.size();
    const auto body = slice(body_from, body_to);
    if (is_reference_heading(headings[h].heading.text)) {
      auto refs = split_references(body);
      doc.references.insert(doc.references.end(), refs.begin(), refs.end());
    }
    doc.sections.push_back({headings[h].heading.text, headings[h].heading.level,
                            body.empty() ? std::string() : std::string(body) + "\n"});
  }
  rebuild_full_text(doc);
  return doc;
}

ParsedDocument map_structured(const nlohmann::json& payload, std::string_view source_bytes, SourceKind kind) {
  if (!payload.is_object()) schema_error("$", "expected an object");
  ParsedDocument doc;
  doc.doc_id = sha256_hex(source_bytes);
  doc.source_kind = kind;
  doc.metadata.byte_size = source_bytes.size();

  if (const auto title = payload.find("title"); title != payload.end() && !title->is_null()) {
    if (!title->is_string()) schema_error("$.title", "expected a string");
    doc.title = title->get<std::string>();
  }

  const auto sections = payload.find("sections");
  if (sections == payload.end()) schema_error("$.sections", "missing required array");
  if (!sections->is_array()) schema_error("$.sections", "expected an array");
  if (sections->empty()) schema_error("$.sections", "at least one section is required");
  for (std::size_t i = 0; i < sections->size(); ++i) {
    const auto& s = (*sections)[i];
    const std::string path = "$.sections[" + std::to_string(i) + "]";
    if (!s.is_object()) schema_error(path, "expected an object");
    Section section;
    const auto heading = s.find("heading");
    if (heading == s.end() || !heading->is_string()) schema_error(path + ".heading", "expected a string");
    section.heading = heading->get<std::string>();
    const auto body = s.find("body");
    if (body == s.end() || !body->is_string()) schema_error(path + ".body", "expected a string");
    section.body = body->get<std::string>();
    if (const auto level = s.find("level"); level != s.end() && !level->is_null()) {
      if (!level->is_number_integer() || level->get<int>() < 1) schema_error(path + ".level", "expected an integer >= 1");
      section.level = level->get<int>();
    }
    doc.sections.push_back(std::move(section));
  }

  if (const auto refs = payload.find("references"); refs != payload.end() && !refs->is_null()) {
    if (!refs->is_array()) schema_error("$.references", "expected an array");
    for (std::size_t i = 0; i < refs->size(); ++i) {
      if (!(*refs)[i].is_string()) schema_error("$.references[" + std::to_string(i) + "]", "expected a string");
      doc.references.push_back((*refs)[i].get<std::string>());
    }
  }
  if (const auto pages = payload.find("page_count"); pages != payload.end() && !pages->is_null()) {
    if (!pages->is_number_integer()) schema_error("$.page_count", "expected an integer");
    doc.metadata.page_count = pages->get<int>();
  }
  rebuild_full_text(doc);
  return doc;
}

ParsedDocument ingest_structured(std::string_view json_text) {
  if (text::trim(json_text).empty()) throw Error(ErrorCode::empty_document, "empty document");
  nlohmann::json payload;
  try {
    payload = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("structured document is not valid JSON: ") + e.what(),
                {{"path", "$"}});
  }
  return map_structured(payload, json_text, SourceKind::Structured);
}

std::size_t section_relevance(const Section& section, const std::vector<std::string>& keywords) {
  std::size_t heading_hits = 0;
  std::size_t body_hits = 0;
  const auto heading = text::to_lower(section.heading);
  for (const auto& k : keywords) {
    if (k.empty()) continue;
    if (heading.find(text::to_lower(k)) != std::string::npos) ++heading_hits;
    body_hits += text::count_occurrences_icase(section.body, k);
  }
  return heading_hits * 1000 + std::min<std::size_t>(body_hits, 999);
}

namespace {

ExcerptBundle pack(const ParsedDocument& doc, const std::vector<std::size_t>& scores, std::size_t budget,
                   int item_id) {
  ExcerptBundle bundle;
  bundle.item_id = item_id;

  std::vector<std::size_t> order(doc.sections.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const bool any_overlap = std::any_of(scores.begin(), scores.end(), [](std::size_t s) { return s > 0; });
  if (any_overlap) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.erase(std::remove_if(order.begin(), order.end(), [&](std::size_t i) { return scores[i] == 0; }),
                order.end());
  }

  for (std::size_t index : order) {
    const auto& section = doc.sections[index];
    if (section.body.empty()) continue;
    const std::size_t remaining = budget - bundle.total_chars;
    std::string_view chunk = section.body;
    if (chunk.size() > remaining) {
      chunk = text::utf8_prefix(chunk, remaining);
      bundle.truncated = true;
    }
    if (!chunk.empty()) {
      bundle.excerpts.push_back({section.heading, std::string(chunk), doc.section_offset(index)});
      bundle.total_chars += chunk.size();
    }
    if (bundle.truncated) break;
  }
  return bundle;
}

}  // namespace

ExcerptBundle excerpts_for_keywords(const ParsedDocument& doc, const std::vector<std::string>& keywords,
                                    std::size_t budget, int item_id) {
  std::vector<std::size_t> scores;
  for (const auto& s : doc.sections) scores.push_back(section_relevance(s, keywords));
  return pack(doc, scores, budget, item_id);
}

ExcerptBundle section_excerpts(const ParsedDocument& doc, const ChecklistItem& item, std::size_t budget) {
  std::vector<std::size_t> scores;
  for (const auto& s : doc.sections) {
    std::size_t score = section_relevance(s, item.keywords);
    if (text::iequals(text::trim(s.heading), item.title)) score += 100'000;
    scores.push_back(score);
  }
  return pack(doc, scores, budget, item.id);
}

}  // namespace slr
