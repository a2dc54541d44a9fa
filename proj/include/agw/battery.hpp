#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "agw/econometrics.hpp"
#include "agw/geo.hpp"
#include "agw/metrics.hpp"
#include "agw/survey.hpp"

namespace agw {

/// Joint rain + temperature regressors estimated together.
struct CombinationBlock {
  std::string name;
  std::vector<MetricId> rain;
  std::vector<MetricId> temp;
  bool quadratic = false;  // also estimated under the quadratic specs
};

/// mean/mean, median/median, total/GDD, z-total/z-GDD, two-moment and
/// three-moment blocks; mean/mean and total/GDD also quadratic.
std::vector<CombinationBlock> default_combination_blocks();

/// Which p-value counts as "the" significance outcome of a quadratic
/// single-metric run. Combination runs always use the joint test.
enum class SignificanceRule : std::uint8_t { Joint, Linear, Either };

SignificanceRule parse_rule(std::string_view text);

struct BatteryConfig {
  std::vector<std::string> countries;
  std::vector<std::string> rain_products;
  std::vector<std::string> temp_products;
  std::vector<ObfuscationScheme> schemes = {kDefaultScheme};
  std::vector<MetricId> metrics;
  std::vector<Outcome> outcomes = {Outcome::Yield, Outcome::Value};
  std::vector<RegressionSpec> specs = canonical_specs();
  bool combinations = false;
  std::vector<CombinationBlock> blocks = default_combination_blocks();
  unsigned threads = 1;
  SignificanceRule rule = SignificanceRule::Joint;
};

struct RunKey {
  std::size_t index = 0;  // position in enumeration order; the total order of keys
  std::string country;
  std::string product;  // "rain+temp" for combination runs
  ObfuscationScheme scheme = kDefaultScheme;
  std::string metric;   // metric name, or "combo:<block>"
  Outcome outcome = Outcome::Yield;
  RegressionSpec spec;
  std::vector<MetricSelection> selections;

  bool is_combination() const { return metric.starts_with("combo:"); }
  /// "rain", "temp" or "combo".
  std::string family() const;
};

/// Throws EmptyDimension when any enumerated dimension is empty.
std::vector<RunKey> enumerate_runs(const BatteryConfig& config);

/// Closed-form run count for a config (single-metric plus combination runs).
std::size_t expected_run_count(const BatteryConfig& config);

struct ResultRow {
  RunKey key;
  double beta1 = kNaN, beta2 = kNaN;
  double se1 = kNaN, se2 = kNaN;
  double p1 = kNaN, p2 = kNaN;
  double p_joint = kNaN;
  double adj_r2 = kNaN;
  long long n = 0;
  long long g = 0;
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
};

/// Survey rows and metric store shared read-only by every run.
struct BatteryData {
  const std::vector<SurveyRow>* survey = nullptr;
  const MetricTable* metrics = nullptr;
};

/// One row per key; per-run failures become the row status. Output does not
/// depend on the thread count. Throws ProviderUnavailable if data is absent.
std::vector<ResultRow> run_battery(const BatteryConfig& config, const std::vector<RunKey>& keys,
                                   const BatteryData& data);
std::vector<ResultRow> run_battery(const BatteryConfig& config, const BatteryData& data);

/// Single run outside the battery (also used by tests).
ResultRow run_one(const RunKey& key, const std::vector<SurveyRow>& country_rows, const MetricTable& metrics);

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
std::string results_csv_text(const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

/// p-value that decides significance of a row under `rule`.
double significance_p(const ResultRow& row, SignificanceRule rule);

// ---------------------------------------------------------------------------
// aggregations

struct ProportionCI {
  double share = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Wilson score interval for k successes out of n.
ProportionCI wilson_interval(std::size_t successes, std::size_t n, double z = 1.959963984540054);

/// Grouping dimensions: country, product, scheme, metric, family, outcome, spec.
std::string group_value(const ResultRow& row, std::string_view dimension);

struct ShareRow {
  std::vector<std::string> group;
  double level = 0.95;
  std::size_t n_ok = 0;
  std::size_t n_error = 0;
  std::size_t n_significant = 0;
  ProportionCI ci;
};

/// Share of ok rows with p below 1 - level, per group and level, with Wilson
/// 95% intervals. Throws EmptyGroup when a group has no ok rows.
std::vector<ShareRow> significance_shares(const std::vector<ResultRow>& rows,
                                          const std::vector<std::string>& group_by,
                                          const std::vector<double>& levels = {0.90, 0.95, 0.99},
                                          SignificanceRule rule = SignificanceRule::Joint);

struct EstimateCI {
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// 95% interval of beta1 on G-1 degrees of freedom.
EstimateCI estimate_ci(const ResultRow& row);

/// a's estimate lies outside b's closed interval.
bool weak_test(const EstimateCI& a, const EstimateCI& b);
/// weak_test and the two intervals are disjoint.
bool strong_test(const EstimateCI& a, const EstimateCI& b);

struct DiffVerdict {
  std::string metric;
  std::string reference;
  std::size_t cells = 0;
  std::size_t weak = 0;
  std::size_t strong = 0;
  bool weak_majority = false;
  bool strong_majority = false;
};

/// Compares each same-family metric with the reference metric cell by cell
/// (country, product, scheme, outcome, spec). Throws MissingReference when a
/// compared cell lacks an ok reference row.
std::vector<DiffVerdict> reference_comparison(const std::vector<ResultRow>& rows, MetricId reference);

struct RowFilter {
  std::map<std::string, std::string> equals;  // dimension -> value
  bool matches(const ResultRow& row) const;
};

struct SpecCurvePoint {
  std::size_t rank = 0;
  ResultRow row;
  EstimateCI ci;
  double p = 0.0;  // under the export's significance rule
  bool significant = false;
};

/// Ok rows passing the filter sorted by beta1 ascending; ties keep key order.
std::vector<SpecCurvePoint> spec_curve_export(const std::vector<ResultRow>& rows, const RowFilter& filter,
                                              SignificanceRule rule = SignificanceRule::Joint);

struct R2Summary {
  std::vector<std::string> group;
  std::size_t n = 0;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Mean adjusted R^2 per group (grouping dimensions plus spec) with a t-based
/// 95% interval. Throws EmptyGroup for groups with fewer than 2 ok rows.
std::vector<R2Summary> r2_summary(const std::vector<ResultRow>& rows, const std::vector<std::string>& group_by);

void write_shares_csv(std::ostream& out, const std::vector<std::string>& group_by, const std::vector<ShareRow>& rows);
void write_r2_csv(std::ostream& out, const std::vector<std::string>& group_by, const std::vector<R2Summary>& rows);
void write_diff_csv(std::ostream& out, const std::vector<DiffVerdict>& rows);
void write_spec_curve_csv(std::ostream& out, const std::vector<SpecCurvePoint>& rows);

}  // namespace agw
