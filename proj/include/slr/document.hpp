#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "slr/checklist.hpp"

namespace slr {

struct Section {
  std::string heading;
  int level = 1;
  std::string body;

  bool operator==(const Section&) const = default;
};

enum class SourceKind { PlainText, Structured, RemoteExtracted };

std::string_view source_kind_name(SourceKind kind);

struct DocumentMetadata {
  std::optional<int> page_count;
  std::size_t byte_size = 0;

  bool operator==(const DocumentMetadata&) const = default;
};

/// Structured text of one uploaded manuscript. `full_text` is the
/// concatenation of section bodies in order; `doc_id` is the SHA-256 of the
/// source bytes.
struct ParsedDocument {
  std::string doc_id;
  std::string title;
  std::vector<Section> sections;
  std::vector<std::string> references;
  std::string full_text;
  SourceKind source_kind = SourceKind::PlainText;
  DocumentMetadata metadata;
  bool structure_warning = false;  ///< no headings were detected

  /// Byte offset of section `index` inside full_text.
  std::size_t section_offset(std::size_t index) const;

  bool operator==(const ParsedDocument&) const = default;
};

void to_json(nlohmann::json& j, const ParsedDocument& doc);
void from_json(const nlohmann::json& j, ParsedDocument& doc);

/// Split plain text into sections with heading heuristics: numbered headings
/// ("2.1 Search strategy"), all-caps lines, and common review section names.
/// Lines after a References/Bibliography heading become reference entries.
ParsedDocument ingest_text(std::string_view raw, std::optional<std::string> title_hint = std::nullopt);

/// Map a structured-document JSON ({title, sections:[{heading, level, body}],
/// references}) into a ParsedDocument. Schema violations raise schema_error
/// with the JSON path of the offending field in the message and details.
ParsedDocument ingest_structured(std::string_view json_text);

/// Same mapping for an already-parsed payload; `source_bytes` feeds doc_id.
ParsedDocument map_structured(const nlohmann::json& payload, std::string_view source_bytes,
                              SourceKind kind);

struct Excerpt {
  std::string section_heading;
  std::string text;
  std::size_t char_offset = 0;  ///< byte offset inside full_text

  bool operator==(const Excerpt&) const = default;
};

struct ExcerptBundle {
  int item_id = 0;
  std::vector<Excerpt> excerpts;
  std::size_t total_chars = 0;
  bool truncated = false;
};

inline constexpr std::size_t kDefaultExcerptBudget = 12'000;

/// Relevance of one section for a keyword list: heading hits dominate body hits.
std::size_t section_relevance(const Section& section, const std::vector<std::string>& keywords);

/// Select manuscript text for one checklist item. Sections are ranked by
/// relevance (ties keep document order) and packed greedily into `budget`
/// bytes; the first section that does not fit is cut to a prefix. With no
/// keyword overlap at all the leading sections are used instead.
ExcerptBundle section_excerpts(const ParsedDocument& doc, const ChecklistItem& item,
                               std::size_t budget = kDefaultExcerptBudget);

/// Keyword-driven variant used by the follow-up copilot.
ExcerptBundle excerpts_for_keywords(const ParsedDocument& doc, const std::vector<std::string>& keywords,
                                    std::size_t budget, int item_id = 0);

}  // namespace slr
