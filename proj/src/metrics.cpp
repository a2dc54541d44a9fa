#include "agw/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>

#include "agw/csv.hpp"
#include "agw/error.hpp"

namespace agw {

namespace {

constexpr std::array<std::string_view, kMetricCount> kMetricNames = {
    "rain_mean",      "rain_median",     "rain_variance", "rain_skew",      "rain_total",
    "rain_dev_total", "rain_z_total",    "rain_days",     "rain_dev_days",  "norain_days",
    "norain_dev_days", "rain_pct_days",  "rain_dev_pct_days", "rain_dry_spell", "temp_mean",
    "temp_median",    "temp_variance",   "temp_skew",     "temp_gdd",       "temp_dev_gdd",
    "temp_z_gdd",     "temp_max_avg",
};

double deviation(double value, const MeanSd& lr) { return std::isfinite(lr.mean) ? value - lr.mean : kNaN; }

double zscore(double value, const MeanSd& lr) {
  if (!std::isfinite(lr.mean) || !std::isfinite(lr.sd) || lr.sd <= 0.0) return kNaN;
  return (value - lr.mean) / lr.sd;
}

Date clamp_month_day(int year, unsigned month, unsigned day) {
  using namespace std::chrono;
  const auto last = year_month_day_last{std::chrono::year{year} / std::chrono::month{month} / std::chrono::last};
  const unsigned dmax = static_cast<unsigned>(last.day());
  return Date{std::chrono::year{year} / std::chrono::month{month} / std::chrono::day{std::min(day, dmax)}};
}

}  // namespace

std::string_view metric_name(MetricId id) { return kMetricNames[index_of(id)]; }

std::string_view family_name(MetricFamily f) { return f == MetricFamily::Rain ? "rain" : "temp"; }

MetricId parse_metric(std::string_view name) {
  name = trim(name);
  for (std::size_t i = 0; i < kMetricCount; ++i)
    if (kMetricNames[i] == name) return static_cast<MetricId>(i);
  throw Error(ErrorCode::InvalidConfig, "unknown metric '" + std::string(name) + "'");
}

std::vector<MetricId> all_metrics() {
  std::vector<MetricId> out;
  for (std::size_t i = 0; i < kMetricCount; ++i) out.push_back(static_cast<MetricId>(i));
  return out;
}

std::vector<MetricId> metrics_of(MetricFamily f) {
  std::vector<MetricId> out;
  for (auto id : all_metrics())
    if (family_of(id) == f) out.push_back(id);
  return out;
}

bool uses_ihs(MetricId id) { return id == MetricId::RainTotal || id == MetricId::RainVariance; }

SeasonWindow parse_season(std::string_view text) {
  auto fail = [&] { throw Error(ErrorCode::InvalidConfig, "bad season window '" + std::string(text) + "'"); };
  const auto sep = text.find("..");
  if (sep == std::string_view::npos) fail();
  auto md = [&](std::string_view part, unsigned& m, unsigned& d) {
    part = trim(part);
    if (part.size() != 5 || part[2] != '-') fail();
    auto r1 = std::from_chars(part.data(), part.data() + 2, m);
    auto r2 = std::from_chars(part.data() + 3, part.data() + 5, d);
    if (r1.ec != std::errc{} || r2.ec != std::errc{} || m < 1 || m > 12 || d < 1 || d > 31) fail();
    const std::chrono::month_day check{std::chrono::month{m}, std::chrono::day{d}};
    if (!check.ok()) fail();
  };
  SeasonWindow w;
  md(text.substr(0, sep), w.start_month, w.start_day);
  md(text.substr(sep + 2), w.end_month, w.end_day);
  return w;
}

DateRange season_dates(const SeasonWindow& w, int year) {
  const Date start = clamp_month_day(year, w.start_month, w.start_day);
  const Date end = clamp_month_day(w.wraps() ? year + 1 : year, w.end_month, w.end_day);
  return {start, static_cast<std::size_t>((end - start).count() + 1)};
}

DailySeries season_slice(const DailySeries& series, const SeasonWindow& window, int year) {
  const auto range = season_dates(window, year);
  const Date series_end = series.start_date + std::chrono::days{static_cast<long>(series.values.size())};
  if (range.first < series.start_date || range.end() > series_end)
    throw Error(ErrorCode::RangeUnavailable, "season " + format_date(range.first) + " to " +
                                                 format_date(range.end() - std::chrono::days{1}) +
                                                 " not covered by the series");
  const auto offset = static_cast<std::size_t>((range.first - series.start_date).count());
  DailySeries out;
  out.start_date = range.first;
  out.variable_kind = series.variable_kind;
  out.product_id = series.product_id;
  out.scheme = series.scheme;
  out.values.assign(series.values.begin() + static_cast<std::ptrdiff_t>(offset),
                    series.values.begin() + static_cast<std::ptrdiff_t>(offset + range.n_days));
  for (double v : out.values)
    if (std::isnan(v)) throw Error(ErrorCode::ContainsMissing, "season " + std::to_string(year) + " has missing days");
  return out;
}

Moments moments(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptySeries, "moments of an empty series");
  const auto n = static_cast<double>(values.size());
  Moments m;
  m.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  m.median = sorted[(sorted.size() - 1) / 2];
  if (sorted.front() == sorted.back() || values.size() < 2) return m;  // degenerate: variance and skew stay 0

  double m2 = 0.0, m3 = 0.0;
  for (double x : values) {
    const double d = x - m.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m.variance = m2 / (n - 1.0);
  if (values.size() >= 3 && m2 > 0.0) {
    const double pop2 = m2 / n;
    const double pop3 = m3 / n;
    m.skew = pop3 / std::pow(pop2, 1.5) * std::sqrt(n * (n - 1.0)) / (n - 2.0);
  }
  return m;
}

std::size_t longest_dry_spell(std::span<const double> rain_mm) {
  std::size_t best = 0, run = 0;
  for (double v : rain_mm) {
    run = v < kRainyDayMm ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

void rainfall_metrics(const DailySeries& season, const LongRunStats& lr, WeatherMetricSet& out) {
  const auto& x = season.values;
  if (x.empty()) throw Error(ErrorCode::EmptySeason, "rainfall season has no days");
  for (double v : x)
    if (std::isnan(v)) throw Error(ErrorCode::ContainsMissing, "rainfall season has missing days");
  const auto len = static_cast<double>(x.size());
  const auto m = moments(x);
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  const auto rain_days = static_cast<double>(std::count_if(x.begin(), x.end(), [](double v) { return v >= kRainyDayMm; }));
  const double norain_days = len - rain_days;
  const double pct = rain_days / len;

  out[MetricId::RainMean] = m.mean;
  out[MetricId::RainMedian] = m.median;
  out[MetricId::RainVariance] = m.variance;
  out[MetricId::RainSkew] = m.skew;
  out[MetricId::RainTotal] = total;
  out[MetricId::RainDevTotal] = deviation(total, lr[MetricId::RainTotal]);
  out[MetricId::RainZTotal] = zscore(total, lr[MetricId::RainTotal]);
  out[MetricId::RainDays] = rain_days;
  out[MetricId::RainDevDays] = deviation(rain_days, lr[MetricId::RainDays]);
  out[MetricId::NoRainDays] = norain_days;
  out[MetricId::NoRainDevDays] = deviation(norain_days, lr[MetricId::NoRainDays]);
  out[MetricId::RainPctDays] = pct;
  out[MetricId::RainDevPctDays] = deviation(pct, lr[MetricId::RainPctDays]);
  out[MetricId::RainDrySpell] = static_cast<double>(longest_dry_spell(x));
}

void temperature_metrics(const DailySeries& season_mean, const DailySeries* season_max,
                         const LongRunStats& lr, const GddBounds& bounds, WeatherMetricSet& out) {
  const auto& t = season_mean.values;
  if (t.empty()) throw Error(ErrorCode::EmptySeason, "temperature season has no days");
  for (double v : t)
    if (std::isnan(v)) throw Error(ErrorCode::ContainsMissing, "temperature season has missing days");
  const auto m = moments(t);
  const auto gdd = static_cast<double>(
      std::count_if(t.begin(), t.end(), [&](double v) { return v >= bounds.low_c && v <= bounds.high_c; }));

  out[MetricId::TempMean] = m.mean;
  out[MetricId::TempMedian] = m.median;
  out[MetricId::TempVariance] = m.variance;
  out[MetricId::TempSkew] = m.skew;
  out[MetricId::TempGdd] = gdd;
  out[MetricId::TempDevGdd] = deviation(gdd, lr[MetricId::TempGdd]);
  out[MetricId::TempZGdd] = zscore(gdd, lr[MetricId::TempGdd]);
  if (season_max != nullptr) {
    const auto& mx = season_max->values;
    if (mx.empty()) throw Error(ErrorCode::EmptySeason, "daily-max season has no days");
    out[MetricId::TempMaxAvg] = std::accumulate(mx.begin(), mx.end(), 0.0) / static_cast<double>(mx.size());
    out.tmax_proxy = false;
  } else {
    out[MetricId::TempMaxAvg] = *std::max_element(t.begin(), t.end());
    out.tmax_proxy = true;
  }
}

LongRunStats long_run_stats(const std::vector<WeatherMetricSet>& seasons) {
  if (seasons.size() < 2)
    throw Error(ErrorCode::TooFewSeasons, "long-run statistics need at least 2 seasons, got " +
                                              std::to_string(seasons.size()));
  LongRunStats lr;
  lr.seasons = seasons.size();
  for (std::size_t k = 0; k < kMetricCount; ++k) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : seasons)
      if (std::isfinite(s.values[k])) {
        sum += s.values[k];
        ++n;
      }
    if (n < 2) continue;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& s : seasons)
      if (std::isfinite(s.values[k])) ss += (s.values[k] - mean) * (s.values[k] - mean);
    lr.stats[k] = {mean, std::sqrt(ss / static_cast<double>(n - 1))};
  }
  return lr;
}

namespace {

Date series_end(const DailySeries& s) {
  return s.start_date + std::chrono::days{static_cast<long>(s.values.size())};
}

// Raw (no long-run) metrics for one year; families that cannot be computed stay NaN.
WeatherMetricSet season_set(const LocationSeries& series, const SeasonWindow& window, int year,
                            const GddBounds& bounds, const LongRunStats& lr) {
  WeatherMetricSet set;
  if (series.rain != nullptr) {
    try {
      rainfall_metrics(season_slice(*series.rain, window, year), lr, set);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::RangeUnavailable && e.code() != ErrorCode::ContainsMissing) throw;
    }
  }
  if (series.temp_mean != nullptr) {
    try {
      const auto mean = season_slice(*series.temp_mean, window, year);
      std::optional<DailySeries> max;
      if (series.temp_max != nullptr) max = season_slice(*series.temp_max, window, year);
      temperature_metrics(mean, max ? &*max : nullptr, lr, bounds, set);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::RangeUnavailable && e.code() != ErrorCode::ContainsMissing) throw;
      for (auto id : metrics_of(MetricFamily::Temp)) set[id] = kNaN;
    }
  }
  return set;
}

}  // namespace

std::map<int, WeatherMetricSet> location_metrics(const LocationSeries& series, const SeasonWindow& window,
                                                 const std::vector<int>& years, const GddBounds& bounds) {
  std::vector<const DailySeries*> present;
  for (const auto* s : {series.rain, series.temp_mean, series.temp_max})
    if (s != nullptr) present.push_back(s);
  std::map<int, WeatherMetricSet> out;
  if (present.empty()) {
    for (int y : years) out[y] = WeatherMetricSet{};
    return out;
  }
  Date first = present.front()->start_date, last = series_end(*present.front());
  for (const auto* s : present) {
    first = std::max(first, s->start_date);
    last = std::min(last, series_end(*s));
  }
  const int first_year = std::max(year_of(first), year_of(blinding_start()));
  const int last_year = year_of(last);

  const LongRunStats none;
  std::vector<WeatherMetricSet> raw;
  for (int y = first_year; y <= last_year; ++y) {
    const auto range = season_dates(window, y);
    if (range.first < first || range.end() > last) continue;
    raw.push_back(season_set(series, window, y, bounds, none));
  }
  LongRunStats lr;
  if (raw.size() >= 2) lr = long_run_stats(raw);
  for (int y : years) out[y] = season_set(series, window, y, bounds, lr);
  return out;
}

}  // namespace agw
