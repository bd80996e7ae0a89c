#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "slr/checklist.hpp"

namespace slr::metrics {

/// Sparse (paper, rater, item) -> score map. Paper and rater ids keep first
/// seen order; every stored score lies in [0,5].
class ScoreMatrix {
 public:
  /// `row` is only used in error messages (1-based CSV line, 0 = unknown).
  void add(const std::string& paper, const std::string& rater, int item, double score, std::size_t row = 0);
  std::optional<double> get(const std::string& paper, const std::string& rater, int item) const;

  const std::vector<std::string>& papers() const { return papers_; }
  const std::vector<std::string>& raters() const { return raters_; }
  std::vector<int> items() const;
  std::size_t size() const { return scores_.size(); }
  bool has_rater(const std::string& rater) const;

 private:
  std::map<std::tuple<std::string, std::string, int>, double> scores_;
  std::vector<std::string> papers_;
  std::vector<std::string> raters_;
  std::map<int, int> items_;
};

/// CSV with header paper_id,rater_id,item_id,score.
ScoreMatrix parse_scores(std::string_view csv);
ScoreMatrix load_scores(const std::filesystem::path& path);

double mae(std::span<const double> a, std::span<const double> b);

/// 100 - (mae / 5 * 100).
double agreement_pct(double mae_value);

enum class HumanAggregation {
  Mean,       ///< compare the agent with the mean of the human scores
  Median,     ///< ... with their median
  PerExpert,  ///< MAE against each human separately, then averaged
};

enum class Grouping { Overall, PerSociety, PerPaper };

std::string_view aggregation_name(HumanAggregation a);
std::optional<HumanAggregation> parse_aggregation(std::string_view name);

struct GroupResult {
  std::string group;  ///< "overall", a society name or a paper id
  std::optional<double> mae;
  std::optional<double> agreement_pct;
  std::size_t compared = 0;  ///< (paper, item) cells with agent and human scores
  std::size_t excluded = 0;  ///< cells dropped for lack of an agent or human score

  bool operator==(const GroupResult&) const = default;
};

std::vector<GroupResult> agent_vs_humans(const ScoreMatrix& matrix, const std::string& agent_rater,
                                         HumanAggregation aggregation, Grouping grouping,
                                         const ChecklistRegistry& registry);

/// Units x raters, missing cells allowed.
struct RatingTable {
  std::vector<std::vector<std::optional<double>>> cells;

  std::size_t units() const { return cells.size(); }
  std::size_t raters() const { return cells.empty() ? 0 : cells.front().size(); }
};

struct IccResult {
  std::optional<double> icc_single;   ///< ICC(A,1)
  std::optional<double> icc_average;  ///< ICC(A,k)
  bool undefined = false;             ///< zero variance or zero denominator
  std::size_t targets = 0;
  std::size_t raters = 0;
  std::size_t rows_dropped = 0;  ///< targets with a missing cell
  double ms_rows = 0;
  double ms_cols = 0;
  double ms_error = 0;
};

/// Two-way random effects, absolute agreement.
IccResult icc_two_way(const RatingTable& table);

struct AlphaResult {
  std::optional<double> alpha;
  bool undefined = false;  ///< expected disagreement is zero
  double observed = 0;
  double expected = 0;
  std::size_t pairable = 0;  ///< values in units with at least two ratings
};

/// Interval-metric Krippendorff alpha. Missing cells contribute no pairs.
AlphaResult krippendorff_alpha(const RatingTable& table);

std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct PearsonResult {
  double mean = 0;
  std::size_t pairs_used = 0;
  std::size_t pairs_excluded = 0;  ///< fewer than two shared units or a constant series
};

PearsonResult avg_pairwise_pearson(const RatingTable& table);

struct Reliability {
  std::optional<double> icc_single;
  std::optional<double> icc_average;
  std::optional<double> krippendorff_alpha;
  std::optional<double> avg_pairwise_pearson;
  std::size_t units = 0;
  std::size_t icc_rows_dropped = 0;
  std::size_t pearson_pairs_excluded = 0;
  std::string note;  ///< why a field is missing
};

/// Units are (paper, item) pairs in matrix order; columns are the human raters.
RatingTable human_rating_table(const ScoreMatrix& matrix, const std::vector<std::string>& humans);

struct BenchmarkReport {
  std::string agent_rater;
  HumanAggregation aggregation = HumanAggregation::Mean;
  std::vector<std::string> human_raters;
  std::size_t entries = 0;
  GroupResult overall;
  std::vector<GroupResult> per_society;
  std::vector<GroupResult> per_paper;
  Reliability reliability;
};

BenchmarkReport benchmark(const ScoreMatrix& matrix, const ChecklistRegistry& registry,
                          const std::string& agent_rater = "agent",
                          HumanAggregation aggregation = HumanAggregation::Mean);

nlohmann::json to_json(const BenchmarkReport& report);

/// Plot data: group,mae,agreement_pct,compared rows.
std::string paper_series_csv(const BenchmarkReport& report);
std::string society_series_csv(const BenchmarkReport& report);

}  // namespace slr::metrics
