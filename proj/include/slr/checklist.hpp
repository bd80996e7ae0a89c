#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace slr {

/// The six manuscript regions the checklist items are partitioned into.
enum class Society {
  TitleAbstract,
  Introduction,
  Methods,
  Results,
  Discussion,
  OtherInformation,
};

inline constexpr std::array<Society, 6> kAllSocieties = {
    Society::TitleAbstract, Society::Introduction, Society::Methods,
    Society::Results,       Society::Discussion,   Society::OtherInformation,
};

/// Agents per society in the reference architecture.
inline constexpr std::array<std::size_t, 6> kSocietyCardinality = {2, 2, 11, 7, 1, 4};
inline constexpr std::size_t kChecklistSize = 27;

std::string_view society_name(Society s);
std::string_view society_display_name(Society s);
std::optional<Society> parse_society(std::string_view name);
std::size_t expected_count(Society s);

struct Exemplar {
  std::string excerpt;
  int score = 0;
  std::string feedback;

  bool operator==(const Exemplar&) const = default;
};

struct ChecklistItem {
  int id = 0;
  Society society = Society::TitleAbstract;
  std::string title;
  std::string guidance;
  Exemplar exemplar;
  std::vector<std::string> keywords;

  bool operator==(const ChecklistItem&) const = default;
};

/// Integer 0..5 scale with one anchor label per level.
struct ScoreScale {
  static constexpr int kMin = 0;
  static constexpr int kMax = 5;

  static std::string_view label(int level);
  static bool contains(int score) { return score >= kMin && score <= kMax; }
};

/// Immutable, validated set of 27 checklist items sorted by id.
class ChecklistRegistry {
 public:
  /// Parse and validate a registry document. Malformed entries raise
  /// parse_error naming the entry; count or cardinality mismatches raise
  /// validation_error with expected vs actual per society in details.
  static ChecklistRegistry load(const nlohmann::json& document);
  static ChecklistRegistry load_text(std::string_view json_text);
  static ChecklistRegistry load_file(const std::string& path);

  /// The PRISMA 2020 registry compiled into the library.
  static const ChecklistRegistry& bundled();

  const std::string& version() const { return version_; }
  const std::vector<ChecklistItem>& items() const { return items_; }
  const ChecklistItem& item(int id) const;
  const ChecklistItem* find(int id) const;

  std::vector<ChecklistItem> items_for_society(Society society) const;
  std::map<Society, std::size_t> society_counts() const;

  nlohmann::json to_json() const;

  bool operator==(const ChecklistRegistry&) const = default;

 private:
  ChecklistRegistry() = default;

  std::string version_;
  std::vector<ChecklistItem> items_;
};

}  // namespace slr
