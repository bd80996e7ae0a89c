#include "slr/text.hpp"

#include <algorithm>
#include <cctype>

namespace slr::text {

namespace {
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }
}  // namespace

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), lower);
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) { return lower(x) == lower(y); });
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::size_t count_occurrences_icase(std::string_view haystack, std::string_view needle) {
  if (needle.empty() || haystack.size() < needle.size()) return 0;
  const std::string h = to_lower(haystack);
  const std::string n = to_lower(needle);
  std::size_t count = 0;
  for (std::size_t pos = h.find(n); pos != std::string::npos; pos = h.find(n, pos + n.size())) {
    ++count;
  }
  return count;
}

std::vector<std::string> word_tokens(std::string_view s) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || u >= 0x80) {
      current.push_back(lower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string_view utf8_prefix(std::string_view s, std::size_t max_bytes) {
  if (s.size() <= max_bytes) return s;
  std::size_t end = max_bytes;
  // Back off over continuation bytes so we cut before a lead byte.
  while (end > 0 && (static_cast<unsigned char>(s[end]) & 0xC0) == 0x80) --end;
  return s.substr(0, end);
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

NormalizedText::NormalizedText(std::string_view original) : original_(original) {
  normalized_.reserve(original.size());
  origin_.reserve(original.size());
  bool pending_space = false;
  std::size_t space_at = 0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const char c = original[i];
    if (is_space(c)) {
      if (!normalized_.empty() && !pending_space) {
        pending_space = true;
        space_at = i;
      }
      continue;
    }
    if (pending_space) {
      normalized_.push_back(' ');
      origin_.push_back(space_at);
      pending_space = false;
    }
    normalized_.push_back(c);
    origin_.push_back(i);
  }
}

std::optional<std::string> NormalizedText::find_verbatim(std::string_view needle) const {
  const std::string n = collapse_whitespace(needle);
  if (n.empty()) return std::nullopt;
  const auto pos = normalized_.find(n);
  if (pos == std::string::npos) return std::nullopt;
  const std::size_t first = origin_[pos];
  const std::size_t last = origin_[pos + n.size() - 1];
  return std::string(original_.substr(first, last - first + 1));
}

}  // namespace slr::text
