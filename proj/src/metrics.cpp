#include "slr/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/tokenizer.hpp>

#include "slr/errors.hpp"
#include "slr/files.hpp"
#include "slr/text.hpp"

namespace slr::metrics {

using nlohmann::json;

void ScoreMatrix::add(const std::string& paper, const std::string& rater, int item, double score, std::size_t row) {
  const std::string where = row ? " at row " + std::to_string(row) : std::string();
  if (!std::isfinite(score) || score < 0 || score > 5)
    throw Error(ErrorCode::range_error, "score out of range [0,5]" + where, {{"row", row}, {"score", score}});
  const auto [it, inserted] = scores_.emplace(std::make_tuple(paper, rater, item), score);
  if (!inserted) {
    throw Error(ErrorCode::duplicate_entry,
                "duplicate score for paper " + paper + ", rater " + rater + ", item " + std::to_string(item) + where,
                {{"row", row}});
  }
  if (std::find(papers_.begin(), papers_.end(), paper) == papers_.end()) papers_.push_back(paper);
  if (std::find(raters_.begin(), raters_.end(), rater) == raters_.end()) raters_.push_back(rater);
  ++items_[item];
}

std::optional<double> ScoreMatrix::get(const std::string& paper, const std::string& rater, int item) const {
  const auto it = scores_.find(std::make_tuple(paper, rater, item));
  if (it == scores_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> ScoreMatrix::items() const {
  std::vector<int> out;
  for (const auto& [id, count] : items_) out.push_back(id);
  return out;
}

bool ScoreMatrix::has_rater(const std::string& rater) const {
  return std::find(raters_.begin(), raters_.end(), rater) != raters_.end();
}

namespace {

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = text::trim(s);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

}  // namespace

ScoreMatrix parse_scores(std::string_view csv) {
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  ScoreMatrix matrix;
  std::istringstream in{std::string(csv)};
  std::string line;
  std::size_t row = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    std::vector<std::string> fields;
    try {
      Tokenizer tokens(line);
      for (const auto& t : tokens) fields.emplace_back(text::trim(t));
    } catch (const boost::escaped_list_error& e) {
      throw Error(ErrorCode::parse_error, "malformed CSV at row " + std::to_string(row) + ": " + e.what(),
                  {{"row", row}});
    }
    if (!header_seen) {
      const std::vector<std::string> expected{"paper_id", "rater_id", "item_id", "score"};
      if (fields != expected)
        throw Error(ErrorCode::parse_error, "CSV header must be paper_id,rater_id,item_id,score", {{"row", row}});
      header_seen = true;
      continue;
    }
    if (fields.size() != 4)
      throw Error(ErrorCode::parse_error, "expected 4 fields at row " + std::to_string(row), {{"row", row}});
    const auto item = parse_number<int>(fields[2]);
    const auto score = parse_number<double>(fields[3]);
    if (!item || !score || fields[0].empty() || fields[1].empty())
      throw Error(ErrorCode::parse_error, "unreadable value at row " + std::to_string(row), {{"row", row}});
    if (*item < 1)
      throw Error(ErrorCode::range_error, "item id must be positive at row " + std::to_string(row), {{"row", row}});
    matrix.add(fields[0], fields[1], *item, *score, row);
  }
  if (!header_seen) throw Error(ErrorCode::parse_error, "CSV is empty");
  return matrix;
}

ScoreMatrix load_scores(const std::filesystem::path& path) { return parse_scores(files::read(path)); }

double mae(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::length_mismatch,
                "score vectors differ in length: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  if (a.empty()) throw Error(ErrorCode::insufficient_data, "MAE needs at least one pair");
  double sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

double agreement_pct(double mae_value) {
  if (!(mae_value >= 0 && mae_value <= 5))
    throw Error(ErrorCode::range_error, "MAE must lie in [0,5]", {{"mae", mae_value}});
  return 100.0 - mae_value * 20.0;
}

std::string_view aggregation_name(HumanAggregation a) {
  switch (a) {
    case HumanAggregation::Mean: return "mean";
    case HumanAggregation::Median: return "median";
    case HumanAggregation::PerExpert: return "per_expert";
  }
  return "mean";
}

std::optional<HumanAggregation> parse_aggregation(std::string_view name) {
  for (auto a : {HumanAggregation::Mean, HumanAggregation::Median, HumanAggregation::PerExpert}) {
    if (aggregation_name(a) == name) return a;
  }
  return std::nullopt;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

struct Cell {
  std::string paper;
  int item;
  double agent;
  std::vector<std::pair<std::string, double>> humans;
};

GroupResult compare_group(std::string name, const std::vector<const Cell*>& cells, std::size_t excluded,
                          HumanAggregation aggregation, const std::vector<std::string>& humans) {
  GroupResult out;
  out.group = std::move(name);
  out.compared = cells.size();
  out.excluded = excluded;
  if (cells.empty()) return out;
  if (aggregation == HumanAggregation::PerExpert) {
    double total = 0;
    std::size_t experts = 0;
    for (const auto& h : humans) {
      std::vector<double> a, b;
      for (const auto* c : cells) {
        for (const auto& [rater, score] : c->humans) {
          if (rater != h) continue;
          a.push_back(c->agent);
          b.push_back(score);
        }
      }
      if (a.empty()) continue;
      total += mae(a, b);
      ++experts;
    }
    out.mae = total / static_cast<double>(experts);
  } else {
    std::vector<double> a, b;
    for (const auto* c : cells) {
      std::vector<double> scores;
      for (const auto& [rater, score] : c->humans) scores.push_back(score);
      a.push_back(c->agent);
      b.push_back(aggregation == HumanAggregation::Median
                      ? median(scores)
                      : std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size()));
    }
    out.mae = mae(a, b);
  }
  out.agreement_pct = agreement_pct(*out.mae);
  return out;
}

std::vector<std::string> human_raters(const ScoreMatrix& matrix, const std::string& agent) {
  std::vector<std::string> humans;
  for (const auto& r : matrix.raters()) {
    if (r != agent) humans.push_back(r);
  }
  return humans;
}

}  // namespace

std::vector<GroupResult> agent_vs_humans(const ScoreMatrix& matrix, const std::string& agent_rater,
                                         HumanAggregation aggregation, Grouping grouping,
                                         const ChecklistRegistry& registry) {
  if (!matrix.has_rater(agent_rater))
    throw Error(ErrorCode::precondition_failed, "agent rater '" + agent_rater + "' has no scores");
  const auto humans = human_raters(matrix, agent_rater);
  if (humans.empty()) throw Error(ErrorCode::precondition_failed, "no human raters in the score matrix");

  // Every (paper, item) the matrix mentions is a candidate cell.
  std::vector<Cell> cells;
  std::vector<std::pair<std::string, int>> dropped;
  for (const auto& paper : matrix.papers()) {
    for (int item : matrix.items()) {
      Cell cell{paper, item, 0, {}};
      const auto agent = matrix.get(paper, agent_rater, item);
      for (const auto& h : humans) {
        if (const auto s = matrix.get(paper, h, item)) cell.humans.emplace_back(h, *s);
      }
      if (!agent && cell.humans.empty()) continue;  // cell not part of the data set
      if (!agent || cell.humans.empty()) {
        dropped.emplace_back(paper, item);
        continue;
      }
      cell.agent = *agent;
      cells.push_back(std::move(cell));
    }
  }

  auto society_of = [&](int item) -> std::optional<Society> {
    const auto* def = registry.find(item);
    return def ? std::optional<Society>(def->society) : std::nullopt;
  };

  std::vector<GroupResult> out;
  if (grouping == Grouping::Overall) {
    std::vector<const Cell*> members;
    for (const auto& c : cells) members.push_back(&c);
    out.push_back(compare_group("overall", members, dropped.size(), aggregation, humans));
  } else if (grouping == Grouping::PerSociety) {
    for (Society society : kAllSocieties) {
      std::vector<const Cell*> members;
      for (const auto& c : cells) {
        if (society_of(c.item) == society) members.push_back(&c);
      }
      const auto excluded = static_cast<std::size_t>(std::count_if(
          dropped.begin(), dropped.end(), [&](const auto& d) { return society_of(d.second) == society; }));
      out.push_back(compare_group(std::string(society_name(society)), members, excluded, aggregation, humans));
    }
  } else {
    for (const auto& paper : matrix.papers()) {
      std::vector<const Cell*> members;
      for (const auto& c : cells) {
        if (c.paper == paper) members.push_back(&c);
      }
      const auto excluded = static_cast<std::size_t>(
          std::count_if(dropped.begin(), dropped.end(), [&](const auto& d) { return d.first == paper; }));
      out.push_back(compare_group(paper, members, excluded, aggregation, humans));
    }
  }
  return out;
}

IccResult icc_two_way(const RatingTable& table) {
  IccResult out;
  out.raters = table.raters();
  if (out.raters < 2) throw Error(ErrorCode::insufficient_data, "ICC needs at least two raters");
  std::vector<std::vector<double>> rows;
  for (const auto& row : table.cells) {
    if (row.size() != out.raters) throw Error(ErrorCode::length_mismatch, "rating table rows differ in length");
    if (std::any_of(row.begin(), row.end(), [](const auto& c) { return !c.has_value(); })) {
      ++out.rows_dropped;
      continue;
    }
    std::vector<double> values;
    for (const auto& c : row) values.push_back(*c);
    rows.push_back(std::move(values));
  }
  out.targets = rows.size();
  if (out.targets < 2)
    throw Error(ErrorCode::insufficient_data, "ICC needs at least two complete targets",
                {{"rows_dropped", out.rows_dropped}});

  const auto n = static_cast<double>(out.targets);
  const auto k = static_cast<double>(out.raters);
  double grand = 0;
  std::vector<double> row_mean(out.targets, 0.0), col_mean(out.raters, 0.0);
  for (std::size_t i = 0; i < out.targets; ++i) {
    for (std::size_t j = 0; j < out.raters; ++j) {
      row_mean[i] += rows[i][j] / k;
      col_mean[j] += rows[i][j] / n;
      grand += rows[i][j];
    }
  }
  grand /= n * k;
  double ss_rows = 0, ss_cols = 0, ss_total = 0;
  for (double m : row_mean) ss_rows += (m - grand) * (m - grand);
  for (double m : col_mean) ss_cols += (m - grand) * (m - grand);
  ss_rows *= k;
  ss_cols *= n;
  for (const auto& r : rows) {
    for (double x : r) ss_total += (x - grand) * (x - grand);
  }
  const double ss_error = std::max(0.0, ss_total - ss_rows - ss_cols);
  out.ms_rows = ss_rows / (n - 1);
  out.ms_cols = ss_cols / (k - 1);
  out.ms_error = ss_error / ((n - 1) * (k - 1));

  const double single_den = out.ms_rows + (k - 1) * out.ms_error + k * (out.ms_cols - out.ms_error) / n;
  const double average_den = out.ms_rows + (out.ms_cols - out.ms_error) / n;
  // Denominators that vanish up to rounding are treated as zero; the ratio
  // would otherwise be cancellation noise of arbitrary size.
  const double tolerance = 1e-12 * (out.ms_rows + out.ms_cols + out.ms_error);
  if (ss_total == 0 || std::fabs(single_den) <= tolerance || std::fabs(average_den) <= tolerance) {
    out.undefined = true;
    return out;
  }
  out.icc_single = (out.ms_rows - out.ms_error) / single_den;
  out.icc_average = (out.ms_rows - out.ms_error) / average_den;
  return out;
}

AlphaResult krippendorff_alpha(const RatingTable& table) {
  AlphaResult out;
  double observed_sum = 0;
  double sum = 0, sum_sq = 0;
  std::size_t usable_units = 0;
  for (const auto& row : table.cells) {
    std::vector<double> values;
    for (const auto& c : row) {
      if (c) values.push_back(*c);
    }
    const auto m = values.size();
    if (m < 2) continue;
    ++usable_units;
    // Sum over ordered pairs i != j of (v_i - v_j)^2 = 2 (m * sum v^2 - (sum v)^2).
    double s = 0, s2 = 0;
    for (double v : values) {
      s += v;
      s2 += v * v;
    }
    observed_sum += 2.0 * (static_cast<double>(m) * s2 - s * s) / static_cast<double>(m - 1);
    sum += s;
    sum_sq += s2;
    out.pairable += m;
  }
  if (usable_units < 2)
    throw Error(ErrorCode::insufficient_data, "alpha needs at least two units with two or more ratings");
  const auto n = static_cast<double>(out.pairable);
  out.observed = observed_sum / n;
  out.expected = 2.0 * (n * sum_sq - sum * sum) / (n * (n - 1));
  if (out.expected <= 0) {
    out.undefined = true;
    return out;
  }
  out.alpha = 1.0 - out.observed / out.expected;
  return out;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::length_mismatch, "series differ in length");
  if (x.size() < 2) return std::nullopt;
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

PearsonResult avg_pairwise_pearson(const RatingTable& table) {
  const auto k = table.raters();
  if (k < 2) throw Error(ErrorCode::insufficient_data, "pairwise Pearson needs at least two raters");
  PearsonResult out;
  double total = 0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      std::vector<double> x, y;
      for (const auto& row : table.cells) {
        if (row[a] && row[b]) {
          x.push_back(*row[a]);
          y.push_back(*row[b]);
        }
      }
      if (const auto r = pearson(x, y)) {
        total += *r;
        ++out.pairs_used;
      } else {
        ++out.pairs_excluded;
      }
    }
  }
  if (!out.pairs_used)
    throw Error(ErrorCode::insufficient_data, "no rater pair has two shared units with nonzero variance",
                {{"pairs_excluded", out.pairs_excluded}});
  out.mean = total / static_cast<double>(out.pairs_used);
  return out;
}

RatingTable human_rating_table(const ScoreMatrix& matrix, const std::vector<std::string>& humans) {
  RatingTable table;
  for (const auto& paper : matrix.papers()) {
    for (int item : matrix.items()) {
      std::vector<std::optional<double>> row;
      bool any = false;
      for (const auto& h : humans) {
        row.push_back(matrix.get(paper, h, item));
        any = any || row.back().has_value();
      }
      if (any) table.cells.push_back(std::move(row));
    }
  }
  return table;
}

BenchmarkReport benchmark(const ScoreMatrix& matrix, const ChecklistRegistry& registry,
                          const std::string& agent_rater, HumanAggregation aggregation) {
  BenchmarkReport report;
  report.agent_rater = agent_rater;
  report.aggregation = aggregation;
  report.entries = matrix.size();
  report.overall = agent_vs_humans(matrix, agent_rater, aggregation, Grouping::Overall, registry).front();
  report.per_society = agent_vs_humans(matrix, agent_rater, aggregation, Grouping::PerSociety, registry);
  report.per_paper = agent_vs_humans(matrix, agent_rater, aggregation, Grouping::PerPaper, registry);
  report.human_raters = human_raters(matrix, agent_rater);

  auto& rel = report.reliability;
  if (report.human_raters.size() < 2) {
    rel.note = "reliability needs at least two human raters";
    return report;
  }
  const auto table = human_rating_table(matrix, report.human_raters);
  rel.units = table.units();
  const auto icc = icc_two_way(table);
  rel.icc_single = icc.icc_single;
  rel.icc_average = icc.icc_average;
  rel.icc_rows_dropped = icc.rows_dropped;
  const auto alpha = krippendorff_alpha(table);
  rel.krippendorff_alpha = alpha.alpha;
  const auto rho = avg_pairwise_pearson(table);
  rel.avg_pairwise_pearson = rho.mean;
  rel.pearson_pairs_excluded = rho.pairs_excluded;
  if (icc.undefined || alpha.undefined) rel.note = "all human scores are identical; ICC and alpha are undefined";
  return report;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(); }

json group_json(const GroupResult& g) {
  return {{"group", g.group},
          {"mae", opt(g.mae)},
          {"agreement_pct", opt(g.agreement_pct)},
          {"compared", g.compared},
          {"excluded", g.excluded}};
}

std::string series_csv(const std::vector<GroupResult>& groups) {
  std::ostringstream out;
  out.precision(17);
  out << "group,mae,agreement_pct,compared\n";
  for (const auto& g : groups) {
    out << g.group << ",";
    if (g.mae) out << *g.mae;
    out << ",";
    if (g.agreement_pct) out << *g.agreement_pct;
    out << "," << g.compared << "\n";
  }
  return out.str();
}

}  // namespace

json to_json(const BenchmarkReport& r) {
  json societies = json::array();
  for (const auto& g : r.per_society) societies.push_back(group_json(g));
  json papers = json::array();
  for (const auto& g : r.per_paper) papers.push_back(group_json(g));
  const auto& rel = r.reliability;
  return {{"agent_rater", r.agent_rater},
          {"human_aggregation", aggregation_name(r.aggregation)},
          {"human_raters", r.human_raters},
          {"entries", r.entries},
          {"overall_mae", opt(r.overall.mae)},
          {"overall_agreement_pct", opt(r.overall.agreement_pct)},
          {"overall_compared", r.overall.compared},
          {"overall_excluded", r.overall.excluded},
          {"per_society", societies},
          {"per_paper", papers},
          {"reliability",
           {{"icc_single", opt(rel.icc_single)},
            {"icc_average", opt(rel.icc_average)},
            {"krippendorff_alpha", opt(rel.krippendorff_alpha)},
            {"avg_pairwise_pearson", opt(rel.avg_pairwise_pearson)},
            {"units", rel.units},
            {"icc_rows_dropped", rel.icc_rows_dropped},
            {"pearson_pairs_excluded", rel.pearson_pairs_excluded},
            {"note", rel.note.empty() ? json() : json(rel.note)}}}};
}

std::string paper_series_csv(const BenchmarkReport& report) { return series_csv(report.per_paper); }
std::string society_series_csv(const BenchmarkReport& report) { return series_csv(report.per_society); }

}  // namespace slr::metrics
