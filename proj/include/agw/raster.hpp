#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "agw/date.hpp"
#include "agw/geometry.hpp"

namespace agw {

enum class VariableKind : std::uint8_t { Rainfall = 0, TempMean = 1, TempMax = 2 };

std::string_view to_string(VariableKind kind);

inline constexpr float kMissing = std::numeric_limits<float>::quiet_NaN();

/// Earliest start date of a blinded record.
inline Date blinding_start() { return make_date(1983, 1, 1); }

/// Daily gridded field. Row 0 is the northernmost row; values are stored
/// day-major then row-major. Missing cells hold NaN.
struct RasterStack {
  VariableKind variable_kind = VariableKind::Rainfall;
  std::string product_id;
  double origin_lon = 0.0;  // NW corner
  double origin_lat = 0.0;
  double cell_size_lon = 1.0;
  double cell_size_lat = 1.0;
  std::uint32_t n_rows = 0;
  std::uint32_t n_cols = 0;
  Date start_date{};
  std::uint32_t n_days = 0;
  std::vector<float> values;

  std::size_t cells_per_day() const { return std::size_t{n_rows} * n_cols; }
  Date end_date() const { return start_date + std::chrono::days{n_days}; }  // exclusive

  std::size_t offset(std::size_t day, std::size_t row, std::size_t col) const {
    return day * cells_per_day() + row * n_cols + col;
  }

  /// Unchecked read of day index `day` (0-based from start_date).
  float at(std::size_t day, std::size_t row, std::size_t col) const {
    return values[offset(day, row, col)];
  }

  double center_lon(std::size_t col) const {
    return origin_lon + (static_cast<double>(col) + 0.5) * cell_size_lon;
  }
  double center_lat(std::size_t row) const {
    return origin_lat - (static_cast<double>(row) + 0.5) * cell_size_lat;
  }

  double east() const { return origin_lon + n_cols * cell_size_lon; }
  double south() const { return origin_lat - n_rows * cell_size_lat; }

  bool contains(const GeoPoint& p) const {
    return p.lon >= origin_lon && p.lon <= east() && p.lat <= origin_lat && p.lat >= south();
  }

  friend bool operator==(const RasterStack& a, const RasterStack& b);
};

/// Throws InvalidHeader if dimensions, sizes, or rainfall support are violated.
void validate(const RasterStack& stack);

/// Drops any days before 1983-01-01 so the record satisfies the blinding rule.
RasterStack shorten_to_blinding_start(const RasterStack& stack);

struct CellIndex {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Containing cell by floor indexing; interior boundaries resolve to the
/// cell east/south of the line. Throws OutOfDomain outside the grid.
CellIndex cell_of(const RasterStack& stack, const GeoPoint& point);

/// Index of `date` relative to the stack start; throws DateOutOfRange.
std::size_t day_index(const RasterStack& stack, Date date);

float value_at(const RasterStack& stack, Date date, std::uint32_t row, std::uint32_t col);

// AGWX container (little-endian):
//   "AGWX" | u16 version=1 | u8 kind | u8 len + product id | f64 origin_lon |
//   f64 origin_lat | f64 cell_lon | f64 cell_lat | u32 rows | u32 cols |
//   i32 start (days since 1970) | u32 days | f32 payload[days*rows*cols]
inline constexpr std::uint16_t kAgwxVersion = 1;

std::vector<std::uint8_t> encode_agwx(const RasterStack& stack);
RasterStack decode_agwx(const std::vector<std::uint8_t>& bytes);

RasterStack load_raster_stack(const std::filesystem::path& path);
void save_raster_stack(const RasterStack& stack, const std::filesystem::path& path);

struct ProductSpec {
  std::string product_id;
  VariableKind variable_kind = VariableKind::Rainfall;
  double cell_size_lon = 0.1;
  double cell_size_lat = 0.1;
  bool has_daily_max = false;  // temperature products only
  std::string units;
};

struct SynthWeatherConfig {
  std::string product_id = "synthetic";
  VariableKind variable_kind = VariableKind::Rainfall;
  double west = 0.0, south = 0.0, east = 1.0, north = 1.0;
  double cell_size_lon = 0.1;
  double cell_size_lat = 0.1;
  Date start_date = make_date(1983, 1, 1);
  Date end_date = make_date(1983, 12, 31);  // inclusive

  // rainfall: wet-day occurrence with a seasonal cycle, gamma amounts
  double gamma_shape = 0.8;
  double gamma_scale = 12.0;
  double wet_prob_mean = 0.35;
  double wet_prob_amplitude = 0.3;
  int wet_peak_doy = 200;

  // temperature: annual sinusoid plus spatially smoothed daily noise
  double temp_mean_c = 22.0;
  double temp_amplitude_c = 4.0;
  int temp_peak_doy = 100;
  double temp_noise_sd_c = 2.0;
  double tmax_offset_c = 7.0;

  double correlation_km = 50.0;
  std::uint64_t seed = 1;
};

void validate(const SynthWeatherConfig& config);

/// Deterministic for a fixed seed. Rainfall is non-negative. TempMean and
/// TempMax stacks generated from the same config share one daily field, so the
/// pair is coherent (tmax = tmean + tmax_offset_c + unit-variance anomaly).
RasterStack synth_weather(const SynthWeatherConfig& config);

}  // namespace agw
