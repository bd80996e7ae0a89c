#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "slr/arxiv.hpp"
#include "slr/copilot.hpp"
#include "slr/extractor.hpp"
#include "slr/llm.hpp"
#include "slr/orchestrator.hpp"

namespace slr {

enum class ProviderMode { Offline, Live, Replay };

std::string_view provider_mode_name(ProviderMode mode);

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "slr-data";
  std::string auth_token;  ///< empty disables authentication
  std::string static_dir;  ///< served at / when set
  int max_concurrent_runs = 2;
  std::size_t max_upload_bytes = 64u << 20;
  ProviderMode mode = ProviderMode::Offline;
  std::string replay_log;  ///< replay mode only
  bool arxiv_enabled = false;
};

struct AppConfig {
  llm::ProviderConfig provider;
  ExtractorConfig extractor;
  arxiv::ClientConfig arxiv;
  RunConfig run;
  CopilotConfig copilot;
  TokenBudgetPolicy chat_budget;
  ServiceConfig service;
};

/// Flat {section: {key: value}} form, the layout of the config file.
nlohmann::json config_to_json(const AppConfig& config);
/// Unknown sections or keys raise validation_error; absent keys keep defaults.
AppConfig config_from_json(const nlohmann::json& j);

using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;

/// Process environment.
std::optional<std::string> getenv_lookup(const std::string& name);

/// Apply SLR_<SECTION>_<KEY> overrides, e.g. SLR_RUN_MAX_PARALLEL=4.
AppConfig apply_env_overrides(const AppConfig& config, const EnvLookup& env);

/// Defaults, then the JSON config file when given, then the environment.
AppConfig load_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env = getenv_lookup);

}  // namespace slr
