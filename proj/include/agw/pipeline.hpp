#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "agw/battery.hpp"
#include "agw/config.hpp"
#include "agw/geo.hpp"
#include "agw/metrics.hpp"
#include "agw/raster.hpp"
#include "agw/survey.hpp"

namespace agw {

inline constexpr std::string_view kVersion = "1.0.0";

struct CountrySetup {
  std::string name;
  Rectangle extent;
  SeasonWindow season;
};

/// A synthetic product; it may provide rainfall, temperature or both.
struct ProductSetup {
  std::string id;
  bool rain = false;
  bool temp = false;
  bool has_max = false;
  SynthWeatherConfig synth;  // grid, climate and field parameters
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::filesystem::path out_dir = "out";

  std::vector<CountrySetup> countries;
  std::vector<ProductSetup> products;
  Date weather_start{};
  Date weather_end{};  // inclusive

  SynthSurveyConfig survey;
  std::string driver_product;

  OffsetRadii radii;
  double ea_buffer_km = 5.0;

  GddBounds gdd;
  BatteryConfig battery;

  std::vector<std::string> group_by = {"scheme"};
  std::vector<double> levels = {0.90, 0.95, 0.99};
  MetricId rain_reference = MetricId::RainMean;
  MetricId temp_reference = MetricId::TempMean;
  RowFilter spec_curve_filter;
  std::vector<MetricSelection> merge_selections;
  std::size_t series_households = 5;

  const ProductSetup& product(const std::string& id) const;
  const CountrySetup& country(const std::string& name) const;
};

/// Reads every section; throws InvalidConfig naming the section or key.
PipelineConfig pipeline_config(const Config& config);

/// Output layout under the run directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path raster(const std::string& country, const std::string& product, VariableKind kind) const;
  std::filesystem::path households(const std::string& country) const;
  std::filesystem::path admin(const std::string& country) const;
  std::filesystem::path file(std::string_view name) const { return root / name; }
};

struct StageReport {
  std::vector<std::pair<std::string, double>> timings;  // stage -> seconds
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
};

inline const std::vector<std::string>& pipeline_commands() {
  static const std::vector<std::string> names = {"synth-weather", "synth-survey", "extract", "metrics", "merge",
                                                 "battery",       "summarize",    "spec-curve", "diff-test"};
  return names;
}

/// Runs one pipeline command. Throws InvalidConfig when a required input file
/// is missing, other Error codes on runtime failure.
StageReport run_command(std::string_view command, const PipelineConfig& config);

// Individual stages, also usable from tests.
void stage_synth_weather(const PipelineConfig& config, StageReport& report);
void stage_synth_survey(const PipelineConfig& config, StageReport& report);
void stage_extract(const PipelineConfig& config, StageReport& report);
void stage_metrics(const PipelineConfig& config, StageReport& report);
void stage_merge(const PipelineConfig& config, StageReport& report);
void stage_battery(const PipelineConfig& config, StageReport& report);
void stage_summarize(const PipelineConfig& config, StageReport& report);
void stage_spec_curve(const PipelineConfig& config, StageReport& report);
void stage_diff_test(const PipelineConfig& config, StageReport& report);

/// In-memory metric records for one country: every configured product,
/// scheme and metric for each household and wave year.
std::vector<MetricRecord> compute_country_metrics(const PipelineConfig& config, const CountrySetup& country,
                                                  const GeoContext& ctx, const Layout& layout);

/// Offset seed used for the modified EA centerpoints of a country.
std::uint64_t offset_seed(const PipelineConfig& config, const std::string& country);

/// FNV-1a digest of a file's bytes, hex encoded.
std::string file_digest(const std::filesystem::path& path);

/// manifest_<command>.json with config hash, seed, version, timings and digests.
void write_manifest(const std::filesystem::path& path, std::string_view command, const Config& config,
                    const PipelineConfig& pipeline, const StageReport& report);

}  // namespace agw
