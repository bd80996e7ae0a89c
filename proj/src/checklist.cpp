#include "slr/checklist.hpp"

#include <algorithm>
#include <set>

#include "slr/bundled_registry.hpp"
#include "slr/errors.hpp"
#include "slr/files.hpp"

namespace slr {

namespace {

constexpr std::array<std::string_view, 6> kNames = {
    "TitleAbstract", "Introduction", "Methods", "Results", "Discussion", "OtherInformation"};
constexpr std::array<std::string_view, 6> kDisplayNames = {
    "Title & Abstract", "Introduction", "Methods", "Results", "Discussion", "Other Information"};

std::size_t index_of(Society s) { return static_cast<std::size_t>(s); }

[[noreturn]] void entry_error(std::size_t index, const std::string& what) {
  throw Error(ErrorCode::parse_error,
              "registry entry items[" + std::to_string(index) + "]: " + what,
              {{"entry", index}});
}

std::string required_string(const nlohmann::json& obj, const char* key, std::size_t index) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) entry_error(index, std::string("missing string '") + key + "'");
  return it->get<std::string>();
}

ChecklistItem parse_item(const nlohmann::json& entry, std::size_t index) {
  if (!entry.is_object()) entry_error(index, "not an object");
  ChecklistItem item;
  const auto id = entry.find("id");
  if (id == entry.end() || !id->is_number_integer()) entry_error(index, "missing integer 'id'");
  item.id = id->get<int>();
  const auto society = parse_society(required_string(entry, "society", index));
  if (!society) entry_error(index, "unknown society '" + entry["society"].get<std::string>() + "'");
  item.society = *society;
  item.title = required_string(entry, "title", index);
  item.guidance = required_string(entry, "guidance", index);

  const auto exemplar = entry.find("exemplar");
  if (exemplar == entry.end() || !exemplar->is_object()) entry_error(index, "missing object 'exemplar'");
  item.exemplar.excerpt = required_string(*exemplar, "excerpt", index);
  item.exemplar.feedback = required_string(*exemplar, "feedback", index);
  const auto score = exemplar->find("score");
  if (score == exemplar->end() || !score->is_number_integer()) entry_error(index, "exemplar missing integer 'score'");
  item.exemplar.score = score->get<int>();

  if (const auto kw = entry.find("keywords"); kw != entry.end()) {
    if (!kw->is_array()) entry_error(index, "'keywords' must be an array");
    for (const auto& k : *kw) {
      if (!k.is_string()) entry_error(index, "keywords must be strings");
      item.keywords.push_back(k.get<std::string>());
    }
  }

  if (item.id < 1 || item.id > static_cast<int>(kChecklistSize))
    entry_error(index, "id " + std::to_string(item.id) + " outside 1..27");
  if (item.guidance.empty()) entry_error(index, "empty guidance");
  if (item.exemplar.excerpt.empty() || item.exemplar.feedback.empty()) entry_error(index, "empty exemplar");
  if (!ScoreScale::contains(item.exemplar.score)) entry_error(index, "exemplar score outside 0..5");
  return item;
}

}  // namespace

std::string_view society_name(Society s) { return kNames[index_of(s)]; }
std::string_view society_display_name(Society s) { return kDisplayNames[index_of(s)]; }
std::size_t expected_count(Society s) { return kSocietyCardinality[index_of(s)]; }

std::optional<Society> parse_society(std::string_view name) {
  for (Society s : kAllSocieties) {
    if (society_name(s) == name) return s;
  }
  return std::nullopt;
}

std::string_view ScoreScale::label(int level) {
  static constexpr std::array<std::string_view, 6> kLabels = {
      "Not Addressed",      "Minimally Addressed", "Partially Addressed",
      "Adequately Addressed", "Well Addressed",    "Thoroughly Addressed"};
  if (!contains(level)) throw Error(ErrorCode::range_error, "score level outside 0..5");
  return kLabels[static_cast<std::size_t>(level)];
}

ChecklistRegistry ChecklistRegistry::load(const nlohmann::json& document) {
  if (!document.is_object()) throw Error(ErrorCode::parse_error, "registry document must be an object");
  ChecklistRegistry registry;
  const auto version = document.find("version");
  if (version == document.end() || !version->is_string())
    throw Error(ErrorCode::parse_error, "registry missing string 'version'");
  registry.version_ = version->get<std::string>();
  const auto items = document.find("items");
  if (items == document.end() || !items->is_array())
    throw Error(ErrorCode::parse_error, "registry missing array 'items'");

  std::set<int> seen;
  for (std::size_t i = 0; i < items->size(); ++i) {
    auto item = parse_item((*items)[i], i);
    if (!seen.insert(item.id).second) entry_error(i, "duplicate id " + std::to_string(item.id));
    registry.items_.push_back(std::move(item));
  }
  std::sort(registry.items_.begin(), registry.items_.end(),
            [](const ChecklistItem& a, const ChecklistItem& b) { return a.id < b.id; });

  if (registry.items_.size() != kChecklistSize) {
    throw Error(ErrorCode::validation_error,
                "expected 27 items, found " + std::to_string(registry.items_.size()),
                {{"expected", kChecklistSize}, {"actual", registry.items_.size()}});
  }
  const auto counts = registry.society_counts();
  nlohmann::json mismatches = nlohmann::json::array();
  std::string message;
  for (Society s : kAllSocieties) {
    const auto actual = counts.at(s);
    if (actual != expected_count(s)) {
      mismatches.push_back({{"society", society_name(s)}, {"expected", expected_count(s)}, {"actual", actual}});
      if (!message.empty()) message += "; ";
      message += std::string(society_name(s)) + " expected " + std::to_string(expected_count(s)) +
                 ", found " + std::to_string(actual);
    }
  }
  if (!mismatches.empty()) {
    throw Error(ErrorCode::validation_error, "society cardinality mismatch: " + message,
                {{"mismatches", mismatches}});
  }
  return registry;
}

ChecklistRegistry ChecklistRegistry::load_text(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("registry is not valid JSON: ") + e.what());
  }
  return load(doc);
}

ChecklistRegistry ChecklistRegistry::load_file(const std::string& path) {
  return load_text(files::read(path));
}

const ChecklistRegistry& ChecklistRegistry::bundled() {
  static const ChecklistRegistry registry = load_text(detail::kBundledRegistryJson);
  return registry;
}

const ChecklistItem* ChecklistRegistry::find(int id) const {
  const auto it = std::lower_bound(items_.begin(), items_.end(), id,
                                   [](const ChecklistItem& item, int v) { return item.id < v; });
  return it != items_.end() && it->id == id ? &*it : nullptr;
}

const ChecklistItem& ChecklistRegistry::item(int id) const {
  if (const auto* found = find(id)) return *found;
  throw Error(ErrorCode::range_error, "no checklist item " + std::to_string(id));
}

std::vector<ChecklistItem> ChecklistRegistry::items_for_society(Society society) const {
  std::vector<ChecklistItem> out;
  std::copy_if(items_.begin(), items_.end(), std::back_inserter(out),
               [society](const ChecklistItem& item) { return item.society == society; });
  return out;
}

std::map<Society, std::size_t> ChecklistRegistry::society_counts() const {
  std::map<Society, std::size_t> counts;
  for (Society s : kAllSocieties) counts[s] = 0;
  for (const auto& item : items_) ++counts[item.society];
  return counts;
}

nlohmann::json ChecklistRegistry::to_json() const {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& item : items_) {
    items.push_back({{"id", item.id},
                     {"society", society_name(item.society)},
                     {"title", item.title},
                     {"guidance", item.guidance},
                     {"exemplar",
                      {{"excerpt", item.exemplar.excerpt},
                       {"score", item.exemplar.score},
                       {"feedback", item.exemplar.feedback}}},
                     {"keywords", item.keywords}});
  }
  return {{"version", version_}, {"items", items}};
}

}  // namespace slr
