#include "slr/config.hpp"

#include <cstdlib>

#include "slr/errors.hpp"
#include "slr/files.hpp"

namespace slr {

using nlohmann::json;

std::string_view provider_mode_name(ProviderMode mode) {
  switch (mode) {
    case ProviderMode::Offline: return "offline";
    case ProviderMode::Live: return "live";
    case ProviderMode::Replay: return "replay";
  }
  return "offline";
}

namespace {

ProviderMode parse_mode(const std::string& name) {
  for (auto m : {ProviderMode::Offline, ProviderMode::Live, ProviderMode::Replay}) {
    if (provider_mode_name(m) == name) return m;
  }
  throw Error(ErrorCode::validation_error, "service.mode must be offline, live or replay");
}

}  // namespace

json config_to_json(const AppConfig& c) {
  json j;
  j["provider"] = {{"base_url", c.provider.base_url},
                   {"api_key_env", c.provider.api_key_env},
                   {"model", c.provider.model_name},
                   {"timeout_s", c.provider.timeout_s},
                   {"max_retries", c.provider.max_retries},
                   {"backoff_initial_ms", c.provider.backoff.initial_ms},
                   {"backoff_multiplier", c.provider.backoff.multiplier},
                   {"backoff_max_ms", c.provider.backoff.max_ms}};
  j["extractor"] = {{"url", c.extractor.url},
                    {"timeout_s", c.extractor.timeout_s},
                    {"max_retries", c.extractor.max_retries},
                    {"max_connections", c.extractor.max_connections}};
  j["arxiv"] = {{"api_base", c.arxiv.api_base},
                {"min_interval_ms", c.arxiv.min_interval.count()},
                {"cache_ttl_s", c.arxiv.cache_ttl.count()},
                {"cache_file", c.arxiv.cache_file ? c.arxiv.cache_file->string() : std::string()},
                {"max_retries", c.arxiv.retry.max_retries}};
  j["run"] = to_json(c.run);
  j["run"].erase("model");  // the provider section names the model
  j["copilot"] = {{"matched_threshold", c.copilot.citation.matched},
                  {"ambiguous_threshold", c.copilot.citation.ambiguous},
                  {"max_tool_calls", c.copilot.max_tool_calls},
                  {"max_context_chars", c.chat_budget.max_context_chars},
                  {"excerpt_budget", c.chat_budget.excerpt_budget}};
  j["service"] = {{"host", c.service.host},
                  {"port", c.service.port},
                  {"data_dir", c.service.data_dir.string()},
                  {"auth_token", c.service.auth_token},
                  {"static_dir", c.service.static_dir},
                  {"max_concurrent_runs", c.service.max_concurrent_runs},
                  {"max_upload_bytes", c.service.max_upload_bytes},
                  {"mode", provider_mode_name(c.service.mode)},
                  {"replay_log", c.service.replay_log},
                  {"arxiv_enabled", c.service.arxiv_enabled}};
  return j;
}

AppConfig config_from_json(const json& in) {
  if (!in.is_object()) throw Error(ErrorCode::validation_error, "config must be a JSON object");
  // Merge onto the defaults so unknown keys can be reported by name.
  json merged = config_to_json(AppConfig{});
  for (const auto& [section, values] : in.items()) {
    if (!merged.contains(section)) throw Error(ErrorCode::validation_error, "unknown config section: " + section);
    if (!values.is_object()) throw Error(ErrorCode::validation_error, "config section " + section + " must be an object");
    for (const auto& [key, value] : values.items()) {
      if (!merged[section].contains(key))
        throw Error(ErrorCode::validation_error, "unknown config key: " + section + "." + key);
      merged[section][key] = value;
    }
  }

  AppConfig c;
  try {
    const auto& p = merged["provider"];
    c.provider.base_url = p["base_url"].get<std::string>();
    c.provider.api_key_env = p["api_key_env"].get<std::string>();
    c.provider.model_name = p["model"].get<std::string>();
    c.provider.timeout_s = p["timeout_s"].get<int>();
    c.provider.max_retries = p["max_retries"].get<int>();
    c.provider.backoff = {p["backoff_initial_ms"].get<int>(), p["backoff_multiplier"].get<double>(),
                          p["backoff_max_ms"].get<int>()};

    const auto& e = merged["extractor"];
    c.extractor.url = e["url"].get<std::string>();
    c.extractor.timeout_s = e["timeout_s"].get<int>();
    c.extractor.max_retries = e["max_retries"].get<int>();
    c.extractor.max_connections = e["max_connections"].get<int>();

    const auto& a = merged["arxiv"];
    c.arxiv.api_base = a["api_base"].get<std::string>();
    c.arxiv.min_interval = Millis(a["min_interval_ms"].get<long long>());
    c.arxiv.cache_ttl = std::chrono::seconds(a["cache_ttl_s"].get<long long>());
    const auto cache_file = a["cache_file"].get<std::string>();
    if (!cache_file.empty()) c.arxiv.cache_file = cache_file;
    c.arxiv.retry.max_retries = a["max_retries"].get<int>();

    c.run = run_config_from_json(merged["run"]);
    c.run.model_name = c.provider.model_name;

    const auto& cp = merged["copilot"];
    c.copilot.citation = {cp["matched_threshold"].get<double>(), cp["ambiguous_threshold"].get<double>()};
    c.copilot.max_tool_calls = cp["max_tool_calls"].get<int>();
    c.copilot.model_name = c.run.model_name;
    c.chat_budget = {cp["max_context_chars"].get<std::size_t>(), cp["excerpt_budget"].get<std::size_t>()};

    const auto& s = merged["service"];
    c.service.host = s["host"].get<std::string>();
    c.service.port = s["port"].get<int>();
    c.service.data_dir = s["data_dir"].get<std::string>();
    c.service.auth_token = s["auth_token"].get<std::string>();
    c.service.static_dir = s["static_dir"].get<std::string>();
    c.service.max_concurrent_runs = s["max_concurrent_runs"].get<int>();
    c.service.max_upload_bytes = s["max_upload_bytes"].get<std::size_t>();
    c.service.mode = parse_mode(s["mode"].get<std::string>());
    c.service.replay_log = s["replay_log"].get<std::string>();
    c.service.arxiv_enabled = s["arxiv_enabled"].get<bool>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::validation_error, std::string("config value has the wrong type: ") + e.what());
  }

  if (c.run.max_parallel < 1) throw Error(ErrorCode::validation_error, "run.max_parallel must be >= 1");
  if (c.run.retry_budget < 0) throw Error(ErrorCode::validation_error, "run.retry_budget must be >= 0");
  if (c.service.max_concurrent_runs < 1)
    throw Error(ErrorCode::validation_error, "service.max_concurrent_runs must be >= 1");
  if (!(c.copilot.citation.ambiguous <= c.copilot.citation.matched))
    throw Error(ErrorCode::validation_error, "copilot.ambiguous_threshold must not exceed matched_threshold");
  c.provider.validate();
  return c;
}

std::optional<std::string> getenv_lookup(const std::string& name) {
  const char* value = std::getenv(name.c_str());
  return value ? std::optional<std::string>(value) : std::nullopt;
}

AppConfig apply_env_overrides(const AppConfig& config, const EnvLookup& env) {
  json j = config_to_json(config);
  for (auto& [section, values] : j.items()) {
    for (auto& [key, value] : values.items()) {
      std::string name = "SLR_" + section + "_" + key;
      std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::toupper(ch); });
      const auto raw = env(name);
      if (!raw) continue;
      if (value.is_string()) {
        value = *raw;
        continue;
      }
      try {
        const auto parsed = json::parse(*raw);
        if (parsed.is_boolean() != value.is_boolean() || parsed.is_number() != value.is_number())
          throw Error(ErrorCode::validation_error, name + " has the wrong type");
        value = parsed;
      } catch (const json::parse_error&) {
        throw Error(ErrorCode::validation_error, name + " is not a valid value");
      }
    }
  }
  return config_from_json(j);
}

AppConfig load_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env) {
  AppConfig config;
  if (file) {
    json j;
    try {
      j = json::parse(files::read(*file));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::parse_error, "config file " + file->string() + " is not valid JSON: " + e.what());
    }
    config = config_from_json(j);
  }
  return apply_env_overrides(config, env);
}

}  // namespace slr
