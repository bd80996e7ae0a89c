#include "slr/arxiv.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <spdlog/spdlog.h>

#include "slr/errors.hpp"
#include "slr/files.hpp"
#include "slr/hashing.hpp"
#include "slr/text.hpp"

namespace slr::arxiv {

namespace pt = boost::property_tree;
using nlohmann::json;

std::optional<Field> parse_field(std::string_view name) {
  if (name == "all") return Field::All;
  if (name == "title" || name == "ti") return Field::Title;
  if (name == "abstract" || name == "abs") return Field::Abstract;
  if (name == "author" || name == "au") return Field::Author;
  return std::nullopt;
}

void SearchQuery::validate() const {
  if (terms.empty()) throw Error(ErrorCode::invalid_request, "search query has no terms");
  for (const auto& t : terms) {
    if (text::trim(t.value).empty()) throw Error(ErrorCode::invalid_request, "search term is empty");
  }
  if (max_results < 1 || max_results > 100) throw Error(ErrorCode::invalid_request, "max_results must be in [1,100]");
  if (start < 0) throw Error(ErrorCode::invalid_request, "start must be >= 0");
}

void to_json(json& j, const ArxivEntry& e) {
  j = {{"id", e.entry_id},
       {"title", e.title},
       {"authors", e.authors},
       {"abstract", e.abstract_text},
       {"published", e.published},
       {"primary_category", e.primary_category},
       {"link", e.link_url}};
}

void from_json(const json& j, ArxivEntry& e) {
  e.entry_id = j.at("id").get<std::string>();
  e.title = j.at("title").get<std::string>();
  e.authors = j.value("authors", std::vector<std::string>{});
  e.abstract_text = j.value("abstract", "");
  e.published = j.value("published", "");
  e.primary_category = j.value("primary_category", "");
  e.link_url = j.value("link", "");
}

namespace {

std::string_view field_prefix(Field f) {
  switch (f) {
    case Field::All: return "all";
    case Field::Title: return "ti";
    case Field::Abstract: return "abs";
    case Field::Author: return "au";
  }
  return "all";
}

std::string encode_component(std::string_view value) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (char c : value) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(c);
    } else if (c == ' ') {
      out.push_back('+');
    } else {
      out.push_back('%');
      out.push_back(kHex[u >> 4]);
      out.push_back(kHex[u & 0x0F]);
    }
  }
  return out;
}

std::string_view local_name(std::string_view tag) {
  const auto colon = tag.rfind(':');
  return colon == std::string_view::npos ? tag : tag.substr(colon + 1);
}

std::string attribute(const pt::ptree& node, const char* name) {
  const auto attrs = node.get_child_optional("<xmlattr>");
  if (!attrs) return {};
  return attrs->get<std::string>(name, "");
}

std::optional<ArxivEntry> read_entry(const pt::ptree& entry) {
  ArxivEntry out;
  std::string raw_id;
  for (const auto& [tag, child] : entry) {
    const auto name = local_name(tag);
    if (name == "id") {
      raw_id = text::collapse_whitespace(child.data());
    } else if (name == "title") {
      out.title = text::collapse_whitespace(child.data());
    } else if (name == "summary") {
      out.abstract_text = text::collapse_whitespace(child.data());
    } else if (name == "published") {
      out.published = std::string(text::trim(child.data()));
    } else if (name == "author") {
      for (const auto& [author_tag, author_child] : child) {
        if (local_name(author_tag) == "name") out.authors.push_back(text::collapse_whitespace(author_child.data()));
      }
    } else if (name == "link") {
      const auto rel = attribute(child, "rel");
      if (out.link_url.empty() && (rel.empty() || rel == "alternate")) out.link_url = attribute(child, "href");
    } else if (name == "primary_category") {
      out.primary_category = attribute(child, "term");
    }
  }
  const auto abs = raw_id.find("/abs/");
  out.entry_id = abs == std::string::npos ? raw_id : raw_id.substr(abs + 5);
  if (out.link_url.empty()) out.link_url = raw_id;
  if (out.entry_id.empty() || out.title.empty()) return std::nullopt;
  return out;
}

}  // namespace

std::string build_query_url(const SearchQuery& query, std::string_view api_base) {
  query.validate();
  std::string search;
  for (std::size_t i = 0; i < query.terms.size(); ++i) {
    if (i) search += query.mode == BooleanMode::And ? "+AND+" : "+OR+";
    const std::string value = text::collapse_whitespace(query.terms[i].value);
    const bool phrase = value.find(' ') != std::string::npos;
    search += field_prefix(query.terms[i].field);
    search += ':';
    search += encode_component(phrase ? "\"" + value + "\"" : value);
  }
  std::string url(api_base);
  url += "?search_query=" + search;
  url += "&max_results=" + std::to_string(query.max_results);
  url += "&start=" + std::to_string(query.start);
  url += query.sort == SortOrder::Relevance ? "&sortBy=relevance" : "&sortBy=submittedDate";
  url += "&sortOrder=descending";
  return url;
}

FeedParseResult parse_feed(std::string_view atom_xml) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(atom_xml)};
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorCode::parse_error, "malformed Atom XML at line " + std::to_string(e.line()) + ": " + e.message(),
                {{"line", e.line()}});
  } catch (const std::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("malformed Atom XML: ") + e.what());
  }

  const pt::ptree* feed = nullptr;
  for (const auto& [tag, child] : tree) {
    if (local_name(tag) == "feed") {
      feed = &child;
      break;
    }
  }
  if (!feed) throw Error(ErrorCode::parse_error, "no Atom <feed> root element");

  FeedParseResult result;
  for (const auto& [tag, child] : *feed) {
    if (local_name(tag) != "entry") continue;
    if (auto entry = read_entry(child)) {
      result.entries.push_back(std::move(*entry));
    } else {
      ++result.skipped;
    }
  }
  if (result.skipped) spdlog::warn("arXiv feed: skipped {} entries without id or title", result.skipped);
  return result;
}

std::vector<ArxivEntry> NullSearch::search(const SearchQuery& query) {
  query.validate();
  return {};
}

TimePoint RateLimiter::acquire() {
  TimePoint slot;
  {
    std::lock_guard lock(mutex_);
    const auto now = clock_.now();
    slot = last_ ? std::max(now, *last_ + min_interval_) : now;
    last_ = slot;
  }
  clock_.sleep_until(slot);
  return slot;
}

FeedCache::FeedCache(std::chrono::seconds ttl, std::optional<std::filesystem::path> spill)
    : ttl_(ttl), spill_(std::move(spill)) {
  if (!spill_) return;
  std::ifstream in(*spill_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      slots_[j.at("url").get<std::string>()] = {parse_timestamp(j.at("fetched_at").get<std::string>()),
                                                j.at("body_sha").get<std::string>(),
                                                j.at("entries").get<std::vector<ArxivEntry>>()};
    } catch (const std::exception& e) {
      spdlog::warn("ignoring unreadable cache line in {}: {}", spill_->string(), e.what());
    }
  }
}

std::optional<std::vector<ArxivEntry>> FeedCache::lookup(const std::string& url, TimePoint now) const {
  std::lock_guard lock(mutex_);
  const auto it = slots_.find(url);
  if (it == slots_.end() || now - it->second.fetched_at >= ttl_) return std::nullopt;
  return it->second.entries;
}

void FeedCache::store(const std::string& url, std::string_view body, const std::vector<ArxivEntry>& entries,
                      TimePoint now) {
  Slot slot{now, sha256_hex(body), entries};
  std::lock_guard lock(mutex_);
  if (spill_) {
    const json line = {{"url", url}, {"fetched_at", format_timestamp(now)}, {"body_sha", slot.body_sha},
                       {"entries", entries}};
    files::append_line(*spill_, line.dump());
  }
  slots_[url] = std::move(slot);
}

ArxivClient::ArxivClient(ClientConfig config, http::Client& client, Clock& clock)
    : config_(std::move(config)),
      client_(client),
      clock_(clock),
      limiter_(clock, config_.min_interval),
      cache_(config_.cache_ttl, config_.cache_file) {}

std::vector<ArxivEntry> ArxivClient::search(const SearchQuery& query) {
  const std::string url = build_query_url(query, config_.api_base);
  if (auto hit = cache_.lookup(url, clock_.now())) return *hit;

  const auto outcome = http::send_with_retry(config_.retry, clock_, [&] {
    limiter_.acquire();
    {
      std::lock_guard lock(stats_mutex_);
      ++fetches_;
    }
    return client_.get(url, {{"Accept", "application/atom+xml"}});
  });
  if (!outcome.response.ok()) {
    throw Error(ErrorCode::transport_error,
                "arXiv query failed after " + std::to_string(outcome.attempts) + " attempt(s): " +
                    (outcome.response.status ? "HTTP " + std::to_string(outcome.response.status)
                                             : outcome.response.error),
                {{"url", url}, {"status", outcome.response.status}});
  }
  auto parsed = parse_feed(outcome.response.body);
  cache_.store(url, outcome.response.body, parsed.entries, clock_.now());
  return std::move(parsed.entries);
}

std::size_t ArxivClient::network_fetches() const {
  std::lock_guard lock(stats_mutex_);
  return fetches_;
}

json search_tool_parameters() {
  return {{"type", "object"},
          {"properties",
           {{"query", {{"type", "string"}, {"description", "Keywords to search for"}}},
            {"field",
             {{"type", "string"},
              {"enum", {"all", "title", "abstract", "author"}},
              {"description", "Which record field to match (default all)"}}},
            {"max_results", {{"type", "integer"}, {"minimum", 1}, {"maximum", 10}}}}},
          {"required", {"query"}}};
}

std::string search_tool_description() {
  return "Search arXiv for research papers. Returns id, title, authors, publication date and a short abstract "
         "for each match.";
}

SearchQuery query_from_tool_arguments(std::string_view arguments_json) {
  json args;
  try {
    args = json::parse(arguments_json);
  } catch (const json::parse_error&) {
    throw Error(ErrorCode::invalid_request, "tool arguments are not JSON");
  }
  if (!args.is_object() || !args.contains("query") || !args["query"].is_string())
    throw Error(ErrorCode::invalid_request, "tool arguments need a string 'query'");
  SearchQuery q;
  Field field = Field::All;
  if (args.contains("field") && args["field"].is_string()) {
    const auto f = parse_field(args["field"].get<std::string>());
    if (!f) throw Error(ErrorCode::invalid_request, "unknown search field");
    field = *f;
  }
  for (const auto& word : text::word_tokens(args["query"].get<std::string>())) q.terms.push_back({field, word});
  if (q.terms.size() > 8) q.terms.resize(8);
  q.max_results = std::clamp(args.value("max_results", 5), 1, 10);
  q.validate();
  return q;
}

std::string format_tool_result(const std::vector<ArxivEntry>& entries) {
  json out = json::array();
  for (const auto& e : entries) {
    std::vector<std::string> authors(e.authors.begin(), e.authors.begin() + std::min<std::size_t>(5, e.authors.size()));
    out.push_back({{"id", e.entry_id},
                   {"title", e.title},
                   {"authors", authors},
                   {"published", e.published},
                   {"summary", std::string(text::utf8_prefix(e.abstract_text, 400))}});
  }
  return out.dump();
}

}  // namespace slr::arxiv
