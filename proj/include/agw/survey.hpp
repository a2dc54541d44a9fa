#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "agw/geo.hpp"
#include "agw/metrics.hpp"

namespace agw {

/// Inverse hyperbolic sine, ln(x + sqrt(x^2 + 1)).
inline double ihs(double x) { return std::asinh(x); }

enum class Outcome : std::uint8_t { Yield, Value };

std::string_view outcome_name(Outcome o);
Outcome parse_outcome(std::string_view text);

/// Continuous and binary production inputs, in survey.csv column order.
inline constexpr std::array<std::string_view, 6> kInputNames = {
    "labor_rate", "fertilizer_rate", "seed_rate", "pesticide", "herbicide", "irrigation"};

struct SurveyRow {
  std::string country;
  std::string hh_id;
  std::string ea_id;
  std::string admin_id;
  int year = 0;
  int wave = 0;
  double primary_crop_yield = 0.0;  // kg/ha
  double total_farm_value = 0.0;    // 2010 USD/ha
  double labor_rate = 0.0;          // days/ha
  double fertilizer_rate = 0.0;     // kg/ha
  double seed_rate = 0.0;           // USD/ha
  int pesticide = 0;
  int herbicide = 0;
  int irrigation = 0;
  int mover = 0;

  double outcome(Outcome o) const { return o == Outcome::Yield ? primary_crop_yield : total_farm_value; }

  /// Controls block as entered in the model: rates through IHS, binaries raw.
  std::array<double, 6> transformed_inputs() const {
    return {ihs(labor_rate), ihs(fertilizer_rate), ihs(seed_rate),
            static_cast<double>(pesticide), static_cast<double>(herbicide), static_cast<double>(irrigation)};
  }
};

struct SurveyPanel {
  std::vector<SurveyRow> rows;
  std::size_t movers_excluded = 0;
};

/// Validates and drops mover rows. Throws SchemaMismatch, DuplicateKey,
/// NegativeOutcome.
SurveyPanel load_survey_csv(const std::filesystem::path& path);
SurveyPanel parse_survey_csv(std::string_view text);
void save_survey_csv(const std::vector<SurveyRow>& rows, const std::filesystem::path& path);
std::string survey_csv_text(const std::vector<SurveyRow>& rows);

// ---------------------------------------------------------------------------
// metrics.csv store

struct MetricRecord {
  std::string country;
  std::string product_id;
  std::string scheme;
  std::string hh_id;
  int year = 0;
  MetricId metric = MetricId::RainMean;
  double value = kNaN;
  bool proxy = false;
};

/// Identifies one weather regressor column: product, scheme and metric.
struct MetricSelection {
  std::string product_id;
  std::string scheme;
  MetricId metric = MetricId::RainMean;

  std::string label() const;
  auto operator<=>(const MetricSelection&) const = default;
};

/// Metric values indexed by (country, product, scheme) then (hh_id, year).
class MetricTable {
 public:
  MetricTable() = default;
  MetricTable(const MetricTable& other) : blocks_(other.blocks_), size_(other.size_) {}
  MetricTable(MetricTable&& other) noexcept : blocks_(std::move(other.blocks_)), size_(other.size_) {
    other.last_block_ = nullptr;
  }
  MetricTable& operator=(MetricTable other) noexcept {
    blocks_ = std::move(other.blocks_);
    size_ = other.size_;
    last_block_ = nullptr;
    return *this;
  }

  void add(const MetricRecord& record);

  struct Entry {
    double value = kNaN;
    bool present = false;
    bool proxy = false;
  };

  /// nullptr when no record exists for the key.
  const Entry* find(const std::string& country, const MetricSelection& sel, const std::string& hh_id,
                    int year) const;

 private:
  struct Block;

 public:
  /// One selected metric of one country, resolved once for repeated lookups.
  class Column {
   public:
    const Entry* find(const std::string& hh_id, int year) const;

   private:
    friend class MetricTable;
    const Block* block_ = nullptr;
    std::size_t metric_ = 0;
  };
  Column column(const std::string& country, const MetricSelection& sel) const;
  bool ambiguous(const std::string& country, const MetricSelection& sel) const;
  std::size_t size() const { return size_; }

  /// Records in deterministic (country, product, scheme, hh, year, metric) order.
  std::vector<MetricRecord> records() const;

 private:
  struct BlockKey {
    std::string country, product_id, scheme;
    auto operator<=>(const BlockKey&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const std::pair<std::string, int>& k) const noexcept {
      return std::hash<std::string>{}(k.first) ^ (static_cast<std::size_t>(k.second) * 0x9E3779B97F4A7C15ull);
    }
  };
  struct Block {
    std::unordered_map<std::pair<std::string, int>, std::size_t, KeyHash> row_of;
    std::vector<std::pair<std::string, int>> keys;
    std::array<std::vector<Entry>, kMetricCount> values;
    std::set<MetricId> duplicated;
  };
  std::map<BlockKey, Block> blocks_;
  Block* last_block_ = nullptr;  // add() fast path for runs of records in one block
  BlockKey last_key_;
  std::size_t size_ = 0;
};

/// Columns: country,product_id,scheme,hh_id,year,metric_id,value,missing_flag,proxy_flag
MetricTable load_metrics_csv(const std::filesystem::path& path);
void write_metrics_csv(std::ostream& out, const std::vector<MetricRecord>& records);

struct DropRecord {
  std::string key;  // country|hh_id|year
  std::string reason;
};

struct MergedPanel {
  std::vector<SurveyRow> rows;
  std::vector<MetricSelection> selections;
  std::vector<std::vector<double>> columns;  // one per selection, aligned with rows
  std::vector<DropRecord> drops;
};

/// Inner join on (country, hh_id, year). Rows lacking a record are dropped as
/// "no_metric", rows whose value is flagged missing as "missing_value".
/// Throws AmbiguousJoin when a selected column has duplicate keys.
MergedPanel merge_weather(const std::vector<SurveyRow>& panel, const MetricTable& metrics,
                          const std::vector<MetricSelection>& selections);

void write_merged_csv(std::ostream& out, const MergedPanel& merged);
void write_drops_csv(std::ostream& out, const std::vector<DropRecord>& drops);

// ---------------------------------------------------------------------------
// synthetic panels

struct SynthSurveyConfig {
  std::string country = "country";
  int admin_rows = 2;
  int admin_cols = 2;
  int eas_per_admin = 5;
  int households_per_ea = 10;
  double margin_deg = 0.15;     // admin grid inset from the raster extent
  double hh_scatter_km = 1.5;   // household distance from the EA center
  double urban_share = 0.2;
  std::vector<int> waves = {2009, 2011, 2013};
  double mover_share = 0.0;

  // outcome = sinh(ihs(level) + a_h + g_t + inputs*pi + beta*f(W) + beta2*f(W)^2 + e)
  MetricId driver = MetricId::RainTotal;
  double beta = 0.5;
  double beta2 = 0.0;
  std::array<double, 6> pi = {0.15, 0.05, 0.10, 0.05, 0.08, 0.20};
  double hh_effect_sd = 0.5;
  std::vector<double> year_effects = {0.0, 0.05, -0.05};
  double noise_sd = 0.3;
  double yield_level = 600.0;
  double value_level = 300.0;
  std::uint64_t seed = 7;
};

void validate(const SynthSurveyConfig& config);

/// Admin grid, EAs and households inside the extent [west,south,east,north].
std::vector<HouseholdGeo> synth_households(const SynthSurveyConfig& config, const Rectangle& extent,
                                           std::map<std::string, AdminUnit>& admins_out);

/// Driver metric keyed by (hh_id, year).
using DriverValues = std::map<std::pair<std::string, int>, double>;

/// One row per household and wave. Throws MissingMetric when the driver value
/// is absent or not finite for any household-year.
std::vector<SurveyRow> synth_survey(const SynthSurveyConfig& config, const GeoContext& ctx,
                                    const DriverValues& driver);

}  // namespace agw
