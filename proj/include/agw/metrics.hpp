#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agw/geo.hpp"

namespace agw {

enum class MetricFamily : std::uint8_t { Rain, Temp };

/// Growing-season metrics: 14 rainfall followed by 8 temperature.
enum class MetricId : std::uint8_t {
  RainMean,
  RainMedian,
  RainVariance,
  RainSkew,
  RainTotal,
  RainDevTotal,
  RainZTotal,
  RainDays,
  RainDevDays,
  NoRainDays,
  NoRainDevDays,
  RainPctDays,
  RainDevPctDays,
  RainDrySpell,
  TempMean,
  TempMedian,
  TempVariance,
  TempSkew,
  TempGdd,
  TempDevGdd,
  TempZGdd,
  TempMaxAvg,
};

inline constexpr std::size_t kMetricCount = 22;
inline constexpr std::size_t kRainMetricCount = 14;
inline constexpr std::size_t kTempMetricCount = 8;

constexpr std::size_t index_of(MetricId id) { return static_cast<std::size_t>(id); }

constexpr MetricFamily family_of(MetricId id) {
  return index_of(id) < kRainMetricCount ? MetricFamily::Rain : MetricFamily::Temp;
}

std::string_view metric_name(MetricId id);
std::string_view family_name(MetricFamily f);
MetricId parse_metric(std::string_view name);
std::vector<MetricId> all_metrics();
std::vector<MetricId> metrics_of(MetricFamily f);

/// Whether the regressor enters the model through the inverse hyperbolic sine.
bool uses_ihs(MetricId id);

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct WeatherMetricSet {
  std::array<double, kMetricCount> values;
  bool tmax_proxy = false;

  WeatherMetricSet() { values.fill(kNaN); }
  double& operator[](MetricId id) { return values[index_of(id)]; }
  double operator[](MetricId id) const { return values[index_of(id)]; }
};

struct MeanSd {
  double mean = kNaN;
  double sd = kNaN;
};

/// Per-metric long-run mean and sample sd over a location's seasons.
struct LongRunStats {
  std::array<MeanSd, kMetricCount> stats;
  std::size_t seasons = 0;

  const MeanSd& operator[](MetricId id) const { return stats[index_of(id)]; }
};

/// Season from start month-day to end month-day; an end earlier in the year
/// than the start wraps into the following year and belongs to the start year.
struct SeasonWindow {
  unsigned start_month = 1, start_day = 1;
  unsigned end_month = 12, end_day = 31;

  bool wraps() const { return end_month < start_month || (end_month == start_month && end_day < start_day); }
};

/// Parses "MM-DD..MM-DD".
SeasonWindow parse_season(std::string_view text);
DateRange season_dates(const SeasonWindow& window, int year);

/// Throws RangeUnavailable if the season is not covered, ContainsMissing if
/// any day in it is NaN.
DailySeries season_slice(const DailySeries& series, const SeasonWindow& window, int year);

struct Moments {
  double mean = 0.0;
  double median = 0.0;    // lower median for even lengths
  double variance = 0.0;  // n-1 denominator
  double skew = 0.0;      // adjusted Fisher-Pearson; 0 when variance is 0
};

Moments moments(std::span<const double> values);

inline constexpr double kRainyDayMm = 1.0;

/// Longest run of consecutive days below 1 mm.
std::size_t longest_dry_spell(std::span<const double> rain_mm);

/// Fills the 14 rainfall entries. Deviations and z-scores are NaN when the
/// long-run mean/sd is unavailable or the sd is zero.
void rainfall_metrics(const DailySeries& season, const LongRunStats& lr, WeatherMetricSet& out);

struct GddBounds {
  double low_c = 10.0;
  double high_c = 30.0;
};

/// Fills the 8 temperature entries. Without a daily-max series, tmax_avg
/// falls back to the season maximum of the daily mean and sets tmax_proxy.
void temperature_metrics(const DailySeries& season_mean, const DailySeries* season_max,
                         const LongRunStats& lr, const GddBounds& bounds, WeatherMetricSet& out);

/// Mean and sd of every finite metric; throws TooFewSeasons below 2 seasons.
LongRunStats long_run_stats(const std::vector<WeatherMetricSet>& seasons);

/// Full-record series for one location and product pairing.
struct LocationSeries {
  const DailySeries* rain = nullptr;
  const DailySeries* temp_mean = nullptr;
  const DailySeries* temp_max = nullptr;
};

/// Metrics for each requested year. Long-run statistics use every complete
/// season starting on or after 1983 that the series cover. Years whose season
/// is missing or uncovered map to an all-NaN set.
std::map<int, WeatherMetricSet> location_metrics(const LocationSeries& series, const SeasonWindow& window,
                                                 const std::vector<int>& years, const GddBounds& bounds = {});

}  // namespace agw
