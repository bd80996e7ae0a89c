// slrcheck: command line front end for PRISMA 2020 evaluation runs, the
// agreement benchmark and the HTTP service.

#include <csignal>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "slr/checklist.hpp"
#include "slr/config.hpp"
#include "slr/errors.hpp"
#include "slr/files.hpp"
#include "slr/metrics.hpp"
#include "slr/run_store.hpp"
#include "slr/service.hpp"
#include "slr/text.hpp"

namespace {

using namespace slr;
using nlohmann::json;

struct CommonOptions {
  std::string config_file;
  std::string data_dir;
  std::string registry_file;
  bool verbose = false;
};

struct ModeOptions {
  bool offline = false;
  bool live = false;
  std::string replay;
};

void add_mode_flags(CLI::App* cmd, ModeOptions& mode) {
  auto* offline = cmd->add_flag("--offline", mode.offline, "Deterministic offline model (default)");
  auto* replay = cmd->add_option("--replay", mode.replay, "Serve model responses from a replay log");
  auto* live = cmd->add_flag("--live", mode.live, "Call the configured chat-completions endpoint");
  offline->excludes(replay)->excludes(live);
  replay->excludes(live);
}

ProviderMode resolve_mode(const ModeOptions& mode, const AppConfig& config) {
  if (mode.live) return ProviderMode::Live;
  if (!mode.replay.empty()) return ProviderMode::Replay;
  if (mode.offline) return ProviderMode::Offline;
  return config.service.mode;
}

AppConfig load_app_config(const CommonOptions& common) {
  std::optional<std::filesystem::path> file;
  if (!common.config_file.empty()) file = common.config_file;
  auto config = load_config(file);
  if (!common.data_dir.empty()) config.service.data_dir = common.data_dir;
  return config;
}

const ChecklistRegistry& load_registry(const CommonOptions& common) {
  static std::optional<ChecklistRegistry> custom;
  if (common.registry_file.empty()) return ChecklistRegistry::bundled();
  custom = ChecklistRegistry::load_file(common.registry_file);
  return *custom;
}

std::string score_text(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << *v;
  return out.str();
}

void print_report_table(const EvaluationReport& report, const ChecklistRegistry& registry) {
  std::cout << std::left << std::setw(22) << "Society" << std::right << std::setw(8) << "Mean" << std::setw(8)
            << "Scored" << std::setw(8) << "Failed" << "\n";
  for (const auto& s : report.societies) {
    std::cout << std::left << std::setw(22) << society_display_name(s.society) << std::right << std::setw(8)
              << score_text(s.mean_score) << std::setw(8) << s.items_scored << std::setw(8) << s.items_failed << "\n";
  }
  std::cout << std::left << std::setw(22) << "Overall" << std::right << std::setw(8) << score_text(report.overall_mean)
            << "\n\n";
  std::cout << std::left << std::setw(6) << "Item" << std::setw(18) << "Society" << std::setw(44) << "Title"
            << std::right << std::setw(6) << "Score" << std::setw(10) << "Attempts" << "  Status\n";
  for (const auto& e : report.items) {
    const auto& def = registry.item(e.item_id);
    std::string title = def.title.size() > 42 ? def.title.substr(0, 39) + "..." : def.title;
    std::cout << std::left << std::setw(6) << e.item_id << std::setw(18) << society_name(def.society) << std::setw(44)
              << title << std::right << std::setw(6) << (e.score ? std::to_string(*e.score) : "-") << std::setw(10)
              << e.attempts << "  " << status_name(e.status) << "\n";
  }
}

int evaluate_file(const CommonOptions& common, const ModeOptions& mode_options, const std::string& file,
                  const std::optional<std::filesystem::path>& record_to, const std::string& out_file, bool as_json,
                  const std::string& synthesis) {
  auto config = load_app_config(common);
  if (!synthesis.empty()) config.run.synthesis = synthesis == "model" ? SynthesisMode::Model : SynthesisMode::Template;
  const auto& registry = load_registry(common);
  const auto mode = resolve_mode(mode_options, config);
  const auto bytes = files::read(file);

  SystemClock clock;
  std::optional<std::filesystem::path> replay_log;
  if (!mode_options.replay.empty()) replay_log = mode_options.replay;
  auto backends = make_backends(config, mode, registry, clock, replay_log, record_to);
  RunStore store(config.service.data_dir);
  RunService service(store, {registry, *backends.provider, *backends.search, clock, backends.extractor.get()},
                     config.run, config.copilot, config.chat_budget, 0);

  const auto submitted =
      service.submit(bytes, std::filesystem::path(file).filename().string(), std::string(), json::object(), false);
  service.process(submitted.run_id);
  const auto run = store.load_run(submitted.run_id);
  if (run.state != RunState::complete) {
    const auto code = parse_code(run.failure_code).value_or(ErrorCode::internal_error);
    std::cerr << "error: " << code_name(code) << ": run " << run.run_id << " failed: " << run.failure << "\n";
    return exit_status(code);
  }
  const auto report_bytes = store.report_bytes(run.run_id).value();
  if (!out_file.empty()) files::write_atomic(out_file, report_bytes);
  if (as_json) {
    std::cout << report_bytes;
    return 0;
  }
  const auto report = report_from_json(json::parse(report_bytes));
  std::cout << "run: " << run.run_id << "\n";
  std::cout << "report: " << store.report_path(run.run_id).string() << "\n";
  if (record_to) std::cout << "replay log: " << record_to->string() << "\n";
  std::cout << "\n";
  print_report_table(report, registry);
  return 0;
}

int metrics_command(const CommonOptions& common, const std::string& csv, const std::string& agent,
                    const std::string& aggregation_name, const std::string& plots_dir, bool as_json) {
  const auto aggregation = metrics::parse_aggregation(aggregation_name);
  if (!aggregation) throw Error(ErrorCode::invalid_request, "aggregation must be mean, median or per_expert");
  const auto& registry = load_registry(common);
  const auto matrix = metrics::load_scores(csv);
  const auto report = metrics::benchmark(matrix, registry, agent, *aggregation);
  if (!plots_dir.empty()) {
    std::filesystem::create_directories(plots_dir);
    files::write_atomic(std::filesystem::path(plots_dir) / "paper_series.csv", metrics::paper_series_csv(report));
    files::write_atomic(std::filesystem::path(plots_dir) / "society_series.csv", metrics::society_series_csv(report));
  }
  if (as_json) {
    std::cout << metrics::to_json(report).dump(2) << "\n";
    return 0;
  }
  auto row = [](const metrics::GroupResult& g) {
    std::cout << std::left << std::setw(20) << g.group << std::right << std::setw(10) << score_text(g.mae)
              << std::setw(12) << score_text(g.agreement_pct) << std::setw(10) << g.compared << std::setw(10)
              << g.excluded << "\n";
  };
  std::cout << "entries: " << report.entries << ", agent rater: " << report.agent_rater
            << ", human aggregation: " << metrics::aggregation_name(report.aggregation) << "\n\n";
  std::cout << std::left << std::setw(20) << "Group" << std::right << std::setw(10) << "MAE" << std::setw(12)
            << "Agreement%" << std::setw(10) << "Compared" << std::setw(10) << "Excluded" << "\n";
  row(report.overall);
  std::cout << "\n";
  for (const auto& g : report.per_society) row(g);
  std::cout << "\n";
  for (const auto& g : report.per_paper) row(g);
  const auto& rel = report.reliability;
  std::cout << "\nHuman inter-rater reliability over " << rel.units << " units:\n"
            << "  ICC(A,1)            " << score_text(rel.icc_single) << "\n"
            << "  ICC(A,k)            " << score_text(rel.icc_average) << "\n"
            << "  Krippendorff alpha  " << score_text(rel.krippendorff_alpha) << "\n"
            << "  Mean Pearson r      " << score_text(rel.avg_pairwise_pearson) << "\n";
  if (!rel.note.empty()) std::cout << "  note: " << rel.note << "\n";
  if (!plots_dir.empty()) std::cout << "\nplot data written to " << plots_dir << "\n";
  return 0;
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

int serve_command(const CommonOptions& common, const ModeOptions& mode_options, const std::string& host, int port,
                  const std::string& static_dir, const std::string& token) {
  auto config = load_app_config(common);
  if (!host.empty()) config.service.host = host;
  if (port > 0) config.service.port = port;
  if (!static_dir.empty()) config.service.static_dir = static_dir;
  if (!token.empty()) config.service.auth_token = token;
  const auto& registry = load_registry(common);
  const auto mode = resolve_mode(mode_options, config);

  SystemClock clock;
  std::optional<std::filesystem::path> replay_log;
  if (!mode_options.replay.empty()) replay_log = mode_options.replay;
  auto backends = make_backends(config, mode, registry, clock, replay_log);
  RunStore store(config.service.data_dir);
  RunService service(store, {registry, *backends.provider, *backends.search, clock, backends.extractor.get()},
                     config.run, config.copilot, config.chat_budget, config.service.max_concurrent_runs);

  httplib::Server server;
  mount_api(server, service, config.service);
  g_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  spdlog::info("serving on http://{}:{} ({} mode, data in {})", config.service.host, config.service.port,
               provider_mode_name(mode), config.service.data_dir.string());
  if (!server.listen(config.service.host, config.service.port)) {
    g_server = nullptr;
    throw Error(ErrorCode::internal_error, "cannot listen on " + config.service.host + ":" +
                                               std::to_string(config.service.port));
  }
  g_server = nullptr;
  return 0;
}

int chat_command(const CommonOptions& common, const ModeOptions& mode_options, const std::string& run_id,
                 std::string session_id) {
  const auto config = load_app_config(common);
  const auto& registry = load_registry(common);
  const auto mode = resolve_mode(mode_options, config);
  SystemClock clock;
  std::optional<std::filesystem::path> replay_log;
  if (!mode_options.replay.empty()) replay_log = mode_options.replay;
  auto backends = make_backends(config, mode, registry, clock, replay_log);
  RunStore store(config.service.data_dir);
  RunService service(store, {registry, *backends.provider, *backends.search, clock, backends.extractor.get()},
                     config.run, config.copilot, config.chat_budget, 0);
  store.load_run(run_id);

  std::cout << "Follow-up chat for run " << run_id << ". Type /cite <reference> to check a citation, /quit to leave.\n";
  std::string line;
  while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
    const auto trimmed = std::string(text::trim(line));
    if (trimmed.empty()) continue;
    if (trimmed == "/quit" || trimmed == "/exit") break;
    try {
      if (trimmed.rfind("/cite ", 0) == 0) {
        const auto verdict = service.verify_citation(trimmed.substr(6));
        std::cout << confidence_name(verdict.confidence) << ": " << verdict.rationale << "\n";
        continue;
      }
      const auto answer = service.chat(run_id, session_id, trimmed);
      session_id = answer["session_id"].get<std::string>();
      std::cout << answer["reply"].get<std::string>() << "\n";
    } catch (const Error& e) {
      if (e.code() == ErrorCode::not_ready || e.code() == ErrorCode::run_not_found) throw;
      std::cerr << "error: " << code_name(e.code()) << ": " << e.what() << "\n";
    }
  }
  if (!session_id.empty()) std::cout << "session: " << session_id << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PRISMA 2020 compliance evaluation for systematic literature reviews"};
  app.require_subcommand(1);
  CommonOptions common;
  app.add_option("--config", common.config_file, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--data-dir", common.data_dir, "Run store directory");
  app.add_option("--registry", common.registry_file, "Checklist registry JSON (default: bundled PRISMA 2020)");
  app.add_flag("-v,--verbose", common.verbose, "Debug logging");

  ModeOptions eval_mode;
  std::string eval_file, eval_out, eval_synthesis;
  bool eval_json = false;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a manuscript against the checklist");
  evaluate->add_option("file", eval_file, "Manuscript (.txt, .md, .json structured document, .pdf)")->required();
  add_mode_flags(evaluate, eval_mode);
  evaluate->add_option("--out", eval_out, "Also write the report JSON here");
  evaluate->add_option("--synthesis", eval_synthesis, "Summary mode")->check(CLI::IsMember({"template", "model"}));
  evaluate->add_flag("--json", eval_json, "Print the report JSON instead of tables");

  std::string metrics_csv, agent_rater = "agent", aggregation = "mean", plots_dir = "plot-data";
  bool metrics_json = false;
  auto* metrics_cmd = app.add_subcommand("metrics", "Agent-versus-human agreement and inter-rater reliability");
  metrics_cmd->add_option("scores", metrics_csv, "CSV with paper_id,rater_id,item_id,score")->required();
  metrics_cmd->add_option("--agent-rater", agent_rater, "Rater id of the agent")->capture_default_str();
  metrics_cmd->add_option("--aggregation", aggregation, "mean, median or per_expert")->capture_default_str();
  metrics_cmd->add_option("--plots-dir", plots_dir, "Directory for plot-data CSVs (empty to skip)")
      ->capture_default_str();
  metrics_cmd->add_flag("--json", metrics_json, "Print the BenchmarkReport JSON");

  ModeOptions serve_mode;
  std::string host, static_dir, token;
  int port = 0;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  add_mode_flags(serve, serve_mode);
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");
  serve->add_option("--static", static_dir, "Directory served at / (web UI bundle)");
  serve->add_option("--token", token, "Require this bearer token on API calls");

  ModeOptions chat_mode;
  std::string chat_run, chat_session;
  auto* chat = app.add_subcommand("chat", "Interactive follow-up conversation about a finished run");
  chat->add_option("run_id", chat_run, "Run id")->required();
  chat->add_option("--session", chat_session, "Continue an existing session");
  add_mode_flags(chat, chat_mode);

  std::string record_file, record_out, record_report_out;
  bool record_offline = false;
  auto* record = app.add_subcommand("record", "Evaluate while capturing every model exchange to a replay log");
  record->add_option("file", record_file, "Manuscript")->required();
  record->add_option("--out", record_out, "Replay log to write")->required();
  record->add_option("--report-out", record_report_out, "Also write the report JSON here");
  record->add_flag("--offline", record_offline, "Record the offline model instead of the live endpoint");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(common.verbose ? spdlog::level::debug : spdlog::level::warn);
  if (serve->parsed() && !common.verbose) spdlog::set_level(spdlog::level::info);

  try {
    if (evaluate->parsed())
      return evaluate_file(common, eval_mode, eval_file, std::nullopt, eval_out, eval_json, eval_synthesis);
    if (metrics_cmd->parsed()) return metrics_command(common, metrics_csv, agent_rater, aggregation, plots_dir, metrics_json);
    if (serve->parsed()) return serve_command(common, serve_mode, host, port, static_dir, token);
    if (chat->parsed()) return chat_command(common, chat_mode, chat_run, chat_session);
    if (record->parsed()) {
      ModeOptions mode;
      mode.offline = record_offline;
      mode.live = !record_offline;
      return evaluate_file(common, mode, record_file, std::filesystem::path(record_out), record_report_out, false, "");
    }
  } catch (const Error& e) {
    std::cerr << "error: " << code_name(e.code()) << ": " << e.what() << "\n";
    return exit_status(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: internal_error: " << e.what() << "\n";
    return exit_status(ErrorCode::internal_error);
  }
  return 0;
}
