// Exit gate: one PASS/FAIL line per headline criterion, nonzero exit on any
// failure or budget overrun.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "slr/arxiv.hpp"
#include "slr/checklist.hpp"
#include "slr/errors.hpp"
#include "slr/files.hpp"
#include "slr/metrics.hpp"
#include "slr/offline.hpp"
#include "slr/orchestrator.hpp"

namespace {

using namespace slr;
using nlohmann::json;
namespace m = slr::metrics;
namespace t = slr::testing;

// Empty string means the criterion held; anything else is the reason it did not.
using Check = std::function<std::string()>;

int failures = 0;

void run_criterion(const std::string& name, double budget_s, const Check& check) {
  const auto start = std::chrono::steady_clock::now();
  std::string why;
  try {
    why = check();
  } catch (const Error& e) {
    why = std::string("unexpected error ") + std::string(code_name(e.code())) + ": " + e.what();
  } catch (const std::exception& e) {
    why = std::string("unexpected exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (why.empty() && secs > budget_s) {
    std::ostringstream s;
    s << "took " << secs << " s, budget " << budget_s << " s";
    why = s.str();
  }
  if (why.empty()) {
    std::printf("PASS  %-34s %8.3f s\n", name.c_str(), secs);
  } else {
    ++failures;
    std::printf("FAIL  %-34s %8.3f s  %s\n", name.c_str(), secs, why.c_str());
  }
  std::fflush(stdout);
}

std::string mismatch(const std::string& what, double got, double want) {
  std::ostringstream s;
  s.precision(17);
  s << what << ": got " << got << ", want " << want;
  return s.str();
}

bool close(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

RunOutcome offline_run(llm::ChatProvider& provider, const std::string& run_id = "run-acceptance") {
  static arxiv::NullSearch search;
  VirtualClock clock;
  RunRequest request{run_id, &t::sample_document(), &ChecklistRegistry::bundled(), RunConfig{}};
  return execute_run(request, {provider, search, clock});
}

std::string agreement_formula() {
  if (m::agreement_pct(0.8) != 84.0) return mismatch("agreement_pct(0.8)", m::agreement_pct(0.8), 84.0);
  if (m::agreement_pct(0.0) != 100.0) return mismatch("agreement_pct(0)", m::agreement_pct(0.0), 100.0);
  if (m::agreement_pct(5.0) != 0.0) return mismatch("agreement_pct(5)", m::agreement_pct(5.0), 0.0);
  return {};
}

std::string structure() {
  const auto& registry = ChecklistRegistry::bundled();
  llm::MockProvider provider(offline_responder(registry));
  const auto outcome = offline_run(provider);
  if (outcome.run.state != RunState::complete) return "run ended " + std::string(run_state_name(outcome.run.state));
  if (!outcome.report) return "no report";
  const auto& items = outcome.report->items;
  if (items.size() != kChecklistSize) return "item count " + std::to_string(items.size());
  std::vector<std::size_t> counts(kAllSocieties.size(), 0);
  for (const auto& e : items) ++counts[static_cast<std::size_t>(registry.item(e.item_id).society)];
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] != kSocietyCardinality[i])
      return std::string(society_name(kAllSocieties[i])) + " has " + std::to_string(counts[i]) + " items";
    const auto& agg = outcome.report->societies.at(i);
    if (agg.items_scored + agg.items_failed != kSocietyCardinality[i])
      return "aggregate for " + std::string(society_name(agg.society)) + " disagrees";
  }
  return {};
}

std::string metric_oracles() {
  std::mt19937_64 rng(7031);
  std::uniform_int_distribution<std::size_t> units_d(2, 6), raters_d(2, 4);
  std::uniform_real_distribution<double> missing_d(0.0, 0.2);
  int icc_defined = 0, alpha_defined = 0, rho_defined = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto units = units_d(rng), raters = raters_d(rng);

    const auto full = t::random_table(rng, units, raters, 0.0);
    const auto icc = m::icc_two_way(full);
    const auto icc_ref = t::oracle_icc(full);
    if (icc.undefined != !icc_ref.has_value()) return "ICC definedness differs at trial " + std::to_string(trial);
    if (icc_ref) {
      ++icc_defined;
      if (!close(*icc.icc_single, icc_ref->first, 1e-9)) return mismatch("ICC(A,1)", *icc.icc_single, icc_ref->first);
      if (!close(*icc.icc_average, icc_ref->second, 1e-9))
        return mismatch("ICC(A,k)", *icc.icc_average, icc_ref->second);
    }

    const auto sparse = t::random_table(rng, units, raters, missing_d(rng));
    const auto alpha_ref = t::oracle_alpha(sparse);
    try {
      const auto alpha = m::krippendorff_alpha(sparse);
      if (alpha.alpha.has_value() != alpha_ref.has_value())
        return "alpha definedness differs at trial " + std::to_string(trial);
      if (alpha_ref) {
        ++alpha_defined;
        if (!close(*alpha.alpha, *alpha_ref, 1e-9)) return mismatch("alpha", *alpha.alpha, *alpha_ref);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::insufficient_data || alpha_ref) throw;
    }

    const auto rho_ref = t::oracle_avg_pearson(sparse);
    try {
      const auto rho = m::avg_pairwise_pearson(sparse);
      if (!rho_ref) return "Pearson defined where the oracle is not";
      ++rho_defined;
      if (!close(rho.mean, *rho_ref, 1e-12)) return mismatch("mean Pearson", rho.mean, *rho_ref);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::insufficient_data || rho_ref) throw;
    }

    std::vector<double> a(units * raters), b(units * raters);
    std::uniform_real_distribution<double> score(0.0, 5.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = score(rng);
      b[i] = score(rng);
    }
    if (!close(m::mae(a, b), t::oracle_mae(a, b), 1e-12)) return mismatch("MAE", m::mae(a, b), t::oracle_mae(a, b));
    const auto r = m::pearson(a, b);
    const auto r_ref = t::oracle_pearson(a, b);
    if (!r || !r_ref || !close(*r, *r_ref, 1e-12)) return "Pearson on continuous series differs";
  }
  if (icc_defined < 100 || alpha_defined < 100 || rho_defined < 100)
    return "too few defined comparisons: icc " + std::to_string(icc_defined) + ", alpha " +
           std::to_string(alpha_defined) + ", pearson " + std::to_string(rho_defined);
  return {};
}

std::string reliability_sanity() {
  m::RatingTable perfect;
  for (int u = 0; u < 30; ++u) perfect.cells.push_back(std::vector<std::optional<double>>(3, double(u % 6)));
  const auto icc = m::icc_two_way(perfect);
  const auto alpha = m::krippendorff_alpha(perfect);
  const auto rho = m::avg_pairwise_pearson(perfect);
  if (!icc.icc_single || *icc.icc_single != 1.0) return "perfect ICC single is not 1";
  if (!alpha.alpha || *alpha.alpha != 1.0) return "perfect alpha is not 1";
  if (rho.mean != 1.0) return mismatch("perfect Pearson", rho.mean, 1.0);

  std::mt19937_64 rng(424242);
  const auto noise = t::random_table(rng, 200, 3, 0.0);
  const auto icc_n = m::icc_two_way(noise);
  const auto alpha_n = m::krippendorff_alpha(noise);
  if (std::fabs(*icc_n.icc_single) >= 0.15) return mismatch("noise ICC", *icc_n.icc_single, 0.0);
  if (std::fabs(*alpha_n.alpha) >= 0.15) return mismatch("noise alpha", *alpha_n.alpha, 0.0);
  return {};
}

std::string threshold_protocol() {
  const auto& registry = ChecklistRegistry::bundled();
  llm::MockProvider clean(offline_responder(registry));
  const auto baseline = offline_run(clean);
  if (!baseline.report) return "fault-free run has no report";

  // Two rejections, then the offline answer.
  llm::MockProvider flaky(offline_responder(registry));
  flaky.script_text(attempt_tag(7, 1), "I cannot produce JSON today.");
  flaky.script_text(attempt_tag(7, 2), R"({"score": 9, "feedback": "Out of range on purpose.", "evidence_quotes": []})");
  const auto recovered = offline_run(flaky);
  if (!recovered.report) return "retry run has no report";
  const auto& seven = recovered.report->items.at(6);
  if (seven.attempts != 3 || seven.status != EvalStatus::ok)
    return "item 7 ended with attempts=" + std::to_string(seven.attempts) + " status=" +
           std::string(status_name(seven.status));

  // Every attempt rejected.
  llm::MockProvider broken(offline_responder(registry));
  for (int attempt = 1; attempt <= 3; ++attempt) broken.script_text(attempt_tag(12, attempt), "not json");
  const auto degraded = offline_run(broken);
  if (degraded.run.state != RunState::complete) return "run with one bad item did not complete";
  const auto& twelve = degraded.report->items.at(11);
  if (twelve.status != EvalStatus::failed || twelve.attempts != 3 || twelve.score) return "item 12 not failed cleanly";
  for (const auto& item : registry.items()) {
    if (item.id == 12) continue;
    if (t::item_bytes(*degraded.report, item.id) != t::item_bytes(*baseline.report, item.id))
      return "item " + std::to_string(item.id) + " differs from the fault-free run";
  }
  return {};
}

std::string replay_determinism() {
  const auto& registry = ChecklistRegistry::bundled();
  t::TempDir dir;
  const auto log = dir.path() / "replay.jsonl";
  json recorded_json;
  {
    llm::MockProvider offline(offline_responder(registry));
    llm::ReplayStore store(log);
    llm::RecordingProvider recorder(offline, store);
    const auto outcome = offline_run(recorder, "run-replay");
    if (!outcome.report) return "recording run has no report";
    recorded_json = report_to_json(*outcome.report, registry);
  }
  const llm::ReplayStore loaded(log);
  if (loaded.size() < kChecklistSize) return "log holds " + std::to_string(loaded.size()) + " exchanges";
  llm::ReplayProvider replay(loaded);
  const auto outcome = offline_run(replay, "run-replay");
  if (!outcome.report) return "replayed run has no report";
  auto replayed_json = report_to_json(*outcome.report, registry);
  recorded_json.erase("timestamps");
  replayed_json.erase("timestamps");
  if (recorded_json != replayed_json) return "replayed report differs";
  return {};
}

std::string arxiv_toolkit() {
  const auto parsed = arxiv::parse_feed(t::read_data("arxiv_feed.xml"));
  const auto expected = json::parse(t::read_data("arxiv_feed_expected.json"));
  if (parsed.entries.size() != expected.size())
    return "parsed " + std::to_string(parsed.entries.size()) + " of " + std::to_string(expected.size()) + " entries";
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (parsed.entries[i].entry_id != expected[i]["id"]) return "id mismatch at entry " + std::to_string(i);
    if (parsed.entries[i].title != expected[i]["title"]) return "title mismatch at entry " + std::to_string(i);
  }

  VirtualClock clock;
  const Millis interval{3000};
  arxiv::RateLimiter limiter(clock, interval);
  std::mutex grants_mutex;
  std::vector<TimePoint> grants;
  {
    std::vector<std::jthread> callers;
    for (int c = 0; c < 16; ++c) {
      callers.emplace_back([&] {
        for (int r = 0; r < 8; ++r) {
          const auto at = limiter.acquire();
          std::lock_guard lock(grants_mutex);
          grants.push_back(at);
        }
      });
    }
  }
  std::sort(grants.begin(), grants.end());
  if (grants.size() != 128) return "only " + std::to_string(grants.size()) + " grants";
  for (std::size_t i = 1; i < grants.size(); ++i) {
    if (grants[i] - grants[i - 1] < interval) return "two grants closer than the interval";
  }
  return {};
}

std::string benchmark_regression() {
  const auto& registry = ChecklistRegistry::bundled();
  const auto matrix = m::load_scores(t::data_path("scores.csv"));
  const auto report = m::benchmark(matrix, registry);
  const std::vector<std::string> humans{"expert-1", "expert-2", "expert-3"};
  if (report.human_raters != humans) return "unexpected human raters";
  if (report.entries != 5 * 4 * 27) return "entry count " + std::to_string(report.entries);

  // Per-cell absolute errors against the human mean, recomputed from scratch.
  struct Cell {
    std::string paper;
    int item;
    double err;
  };
  std::vector<Cell> cells;
  for (const auto& paper : matrix.papers()) {
    for (const auto& item : registry.items()) {
      double sum = 0;
      for (const auto& h : humans) sum += *matrix.get(paper, h, item.id);
      cells.push_back({paper, item.id, std::fabs(*matrix.get(paper, "agent", item.id) - sum / 3.0)});
    }
  }
  auto group_mae = [&](auto pred) {
    double total = 0;
    std::size_t count = 0;
    for (const auto& c : cells)
      if (pred(c)) total += c.err, ++count;
    return std::make_pair(total / static_cast<double>(count), count);
  };

  const auto [overall, overall_n] = group_mae([](const Cell&) { return true; });
  if (!close(*report.overall.mae, overall, 1e-12)) return mismatch("overall MAE", *report.overall.mae, overall);
  if (!close(*report.overall.agreement_pct, 100 - overall * 20, 1e-9)) return "overall agreement differs";
  if (report.overall.compared != overall_n || report.overall.excluded != 0) return "overall counts differ";

  double weighted = 0;
  std::size_t total_n = 0;
  for (std::size_t s = 0; s < kAllSocieties.size(); ++s) {
    const auto society = kAllSocieties[s];
    const auto [mae, n] = group_mae([&](const Cell& c) { return registry.item(c.item).society == society; });
    const auto& g = report.per_society.at(s);
    if (g.group != society_name(society) || g.compared != n) return "society grouping differs at " + g.group;
    if (!close(*g.mae, mae, 1e-12)) return mismatch(g.group + " MAE", *g.mae, mae);
    weighted += *g.mae * static_cast<double>(g.compared);
    total_n += g.compared;
  }
  if (total_n != overall_n || !close(weighted / static_cast<double>(total_n), *report.overall.mae, 1e-12))
    return "per-society groups do not sum to the overall MAE";

  weighted = 0;
  total_n = 0;
  for (std::size_t p = 0; p < matrix.papers().size(); ++p) {
    const auto& paper = matrix.papers()[p];
    const auto [mae, n] = group_mae([&](const Cell& c) { return c.paper == paper; });
    const auto& g = report.per_paper.at(p);
    if (g.group != paper || g.compared != n) return "paper grouping differs at " + paper;
    if (!close(*g.mae, mae, 1e-12)) return mismatch(paper + " MAE", *g.mae, mae);
    weighted += *g.mae * static_cast<double>(g.compared);
    total_n += g.compared;
  }
  if (total_n != overall_n || !close(weighted / static_cast<double>(total_n), *report.overall.mae, 1e-12))
    return "per-paper groups do not sum to the overall MAE";

  const auto table = m::human_rating_table(matrix, humans);
  const auto icc = t::oracle_icc(table);
  const auto alpha = t::oracle_alpha(table);
  const auto rho = t::oracle_avg_pearson(table);
  const auto& rel = report.reliability;
  if (rel.units != 5 * 27) return "reliability units " + std::to_string(rel.units);
  if (!icc || !close(*rel.icc_single, icc->first, 1e-9) || !close(*rel.icc_average, icc->second, 1e-9))
    return "ICC differs from the oracle";
  if (!alpha || !close(*rel.krippendorff_alpha, *alpha, 1e-9)) return "alpha differs from the oracle";
  if (!rho || !close(*rel.avg_pairwise_pearson, *rho, 1e-12)) return "Pearson differs from the oracle";

  const auto j = m::to_json(report);
  if (j["overall_mae"].get<double>() != *report.overall.mae || j["per_society"].size() != 6 ||
      j["per_paper"].size() != 5)
    return "JSON form disagrees with the report";
  return {};
}

}  // namespace

int main() {
  run_criterion("agreement formula", 1, agreement_formula);
  run_criterion("checklist structure", 10, structure);
  run_criterion("metric oracle equivalence", 30, metric_oracles);
  run_criterion("reliability sanity", 10, reliability_sanity);
  run_criterion("retry threshold protocol", 10, threshold_protocol);
  run_criterion("replay determinism", 10, replay_determinism);
  run_criterion("arxiv feed and rate limiter", 5, arxiv_toolkit);
  run_criterion("benchmark regression", 5, benchmark_regression);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
