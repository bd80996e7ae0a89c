#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace slr::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

/// Collapse every run of whitespace to one space and trim both ends.
std::string collapse_whitespace(std::string_view s);

/// Count non-overlapping case-insensitive occurrences of `needle` in `haystack`.
std::size_t count_occurrences_icase(std::string_view haystack, std::string_view needle);

/// Lowercased alphanumeric tokens.
std::vector<std::string> word_tokens(std::string_view s);

/// Longest prefix of `s` no longer than `max_bytes` that does not split a
/// UTF-8 sequence.
std::string_view utf8_prefix(std::string_view s, std::size_t max_bytes);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Whitespace-collapsed view of a text that remembers where each normalized
/// character came from, so a match in normalized space maps back to a
/// verbatim span of the original.
class NormalizedText {
 public:
  explicit NormalizedText(std::string_view original);

  const std::string& normalized() const { return normalized_; }

  /// Verbatim span of the original covering the first normalized match of
  /// `needle` (needle is normalized first). Empty optional when absent.
  std::optional<std::string> find_verbatim(std::string_view needle) const;

 private:
  std::string_view original_;
  std::string normalized_;
  std::vector<std::size_t> origin_;
};

}  // namespace slr::text
