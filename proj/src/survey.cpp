#include "agw/survey.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "agw/csv.hpp"
#include "agw/error.hpp"
#include "agw/random.hpp"

namespace agw {

std::string_view outcome_name(Outcome o) { return o == Outcome::Yield ? "yield" : "value"; }

Outcome parse_outcome(std::string_view text) {
  text = trim(text);
  if (text == "yield") return Outcome::Yield;
  if (text == "value") return Outcome::Value;
  throw Error(ErrorCode::InvalidConfig, "unknown outcome '" + std::string(text) + "'");
}

namespace {

constexpr std::array<std::string_view, 15> kSurveyColumns = {
    "country",          "hh_id",          "ea_id",      "admin_id",  "year",
    "wave",             "primary_crop_yield", "total_farm_value", "labor_rate", "fertilizer_rate",
    "seed_rate",        "pesticide",      "herbicide",  "irrigation", "mover"};

int parse_binary(std::string_view cell, std::string_view column) {
  const auto v = parse_int(cell);
  if (v != 0 && v != 1)
    throw Error(ErrorCode::SchemaMismatch, std::string(column) + " must be 0 or 1, got " + std::string(cell));
  return static_cast<int>(v);
}

}  // namespace

SurveyPanel parse_survey_csv(std::string_view text) {
  const auto table = parse_csv(text);
  std::array<std::size_t, kSurveyColumns.size()> col{};
  for (std::size_t i = 0; i < kSurveyColumns.size(); ++i) col[i] = table.column(kSurveyColumns[i]);

  SurveyPanel panel;
  std::set<std::tuple<std::string, std::string, int>> seen;
  for (const auto& cells : table.rows) {
    SurveyRow r;
    r.country = cells[col[0]];
    r.hh_id = cells[col[1]];
    r.ea_id = cells[col[2]];
    r.admin_id = cells[col[3]];
    r.year = static_cast<int>(parse_int(cells[col[4]]));
    r.wave = static_cast<int>(parse_int(cells[col[5]]));
    r.primary_crop_yield = parse_double(cells[col[6]]);
    r.total_farm_value = parse_double(cells[col[7]]);
    r.labor_rate = parse_double(cells[col[8]]);
    r.fertilizer_rate = parse_double(cells[col[9]]);
    r.seed_rate = parse_double(cells[col[10]]);
    r.pesticide = parse_binary(cells[col[11]], "pesticide");
    r.herbicide = parse_binary(cells[col[12]], "herbicide");
    r.irrigation = parse_binary(cells[col[13]], "irrigation");
    r.mover = parse_binary(cells[col[14]], "mover");

    const std::string key = r.country + "|" + r.hh_id + "|" + std::to_string(r.year);
    if (!seen.emplace(r.country, r.hh_id, r.year).second)
      throw Error(ErrorCode::DuplicateKey, "duplicate household-year " + key);
    for (double v : {r.primary_crop_yield, r.total_farm_value, r.labor_rate, r.fertilizer_rate, r.seed_rate}) {
      if (std::isnan(v)) throw Error(ErrorCode::SchemaMismatch, "missing value in row " + key);
      if (v < 0.0) throw Error(ErrorCode::NegativeOutcome, "negative outcome or rate in row " + key);
    }
    if (r.mover != 0) {
      ++panel.movers_excluded;
      continue;
    }
    panel.rows.push_back(std::move(r));
  }
  return panel;
}

SurveyPanel load_survey_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_survey_csv(ss.str());
}

std::string survey_csv_text(const std::vector<SurveyRow>& rows) {
  std::ostringstream out;
  std::vector<std::string> header(kSurveyColumns.begin(), kSurveyColumns.end());
  out << join(header, ",") << '\n';
  for (const auto& r : rows) {
    out << r.country << ',' << r.hh_id << ',' << r.ea_id << ',' << r.admin_id << ',' << r.year << ','
        << r.wave << ',' << format_double(r.primary_crop_yield) << ',' << format_double(r.total_farm_value)
        << ',' << format_double(r.labor_rate) << ',' << format_double(r.fertilizer_rate) << ','
        << format_double(r.seed_rate) << ',' << r.pesticide << ',' << r.herbicide << ',' << r.irrigation
        << ',' << r.mover << '\n';
  }
  return out.str();
}

void save_survey_csv(const std::vector<SurveyRow>& rows, const std::filesystem::path& path) {
  write_text_atomic(path, survey_csv_text(rows));
}

// ---------------------------------------------------------------------------

std::string MetricSelection::label() const {
  return product_id + ":" + scheme + ":" + std::string(metric_name(metric));
}

void MetricTable::add(const MetricRecord& record) {
  if (last_block_ == nullptr || last_key_.country != record.country || last_key_.product_id != record.product_id ||
      last_key_.scheme != record.scheme) {
    last_key_ = BlockKey{record.country, record.product_id, record.scheme};
    last_block_ = &blocks_[last_key_];
  }
  auto& block = *last_block_;
  auto key = std::make_pair(record.hh_id, record.year);
  auto [it, inserted] = block.row_of.emplace(key, block.keys.size());
  if (inserted) {
    block.keys.push_back(std::move(key));
    for (auto& column : block.values) column.emplace_back();
  }
  auto& entry = block.values[index_of(record.metric)][it->second];
  if (entry.present) block.duplicated.insert(record.metric);
  entry = {record.value, true, record.proxy};
  ++size_;
}

const MetricTable::Entry* MetricTable::find(const std::string& country, const MetricSelection& sel,
                                            const std::string& hh_id, int year) const {
  return column(country, sel).find(hh_id, year);
}

MetricTable::Column MetricTable::column(const std::string& country, const MetricSelection& sel) const {
  Column c;
  const auto b = blocks_.find(BlockKey{country, sel.product_id, sel.scheme});
  if (b != blocks_.end()) c.block_ = &b->second;
  c.metric_ = index_of(sel.metric);
  return c;
}

const MetricTable::Entry* MetricTable::Column::find(const std::string& hh_id, int year) const {
  if (block_ == nullptr) return nullptr;
  const auto r = block_->row_of.find({hh_id, year});
  if (r == block_->row_of.end()) return nullptr;
  const auto& e = block_->values[metric_][r->second];
  return e.present ? &e : nullptr;
}

bool MetricTable::ambiguous(const std::string& country, const MetricSelection& sel) const {
  const auto b = blocks_.find(BlockKey{country, sel.product_id, sel.scheme});
  return b != blocks_.end() && b->second.duplicated.contains(sel.metric);
}

std::vector<MetricRecord> MetricTable::records() const {
  std::vector<MetricRecord> out;
  out.reserve(size_);
  for (const auto& [key, block] : blocks_) {
    std::vector<std::pair<std::pair<std::string, int>, std::size_t>> rows(block.row_of.begin(), block.row_of.end());
    std::sort(rows.begin(), rows.end());
    for (const auto& [hh_year, row] : rows) {
      for (std::size_t m = 0; m < kMetricCount; ++m) {
        const auto& e = block.values[m][row];
        if (!e.present) continue;
        out.push_back({key.country, key.product_id, key.scheme, hh_year.first, hh_year.second,
                       static_cast<MetricId>(m), e.value, e.proxy});
      }
    }
  }
  return out;
}

MetricTable load_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::SchemaMismatch, "empty metrics file");
  const auto header = split(line, ',');
  const std::vector<std::string> expected = {"country", "product_id", "scheme",       "hh_id",     "year",
                                             "metric_id", "value",    "missing_flag", "proxy_flag"};
  if (header != expected)
    throw Error(ErrorCode::SchemaMismatch, "metrics.csv header must be " + join(expected, ","));
  MetricTable table;
  std::vector<std::string_view> cells;
  while (std::getline(in, line)) {
    const std::string_view sv = trim(line);
    if (sv.empty()) continue;
    cells.clear();
    std::size_t start = 0;
    while (true) {
      const auto pos = sv.find(',', start);
      cells.push_back(sv.substr(start, pos == std::string_view::npos ? pos : pos - start));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
    if (cells.size() != expected.size())
      throw Error(ErrorCode::SchemaMismatch, "metrics.csv row with " + std::to_string(cells.size()) + " cells");
    MetricRecord r{std::string(cells[0]), std::string(cells[1]), std::string(cells[2]), std::string(cells[3]),
                   static_cast<int>(parse_int(cells[4])), parse_metric(cells[5]), parse_double(cells[6]),
                   parse_int(cells[8]) != 0};
    if (parse_int(cells[7]) != 0) r.value = kNaN;
    table.add(r);
  }
  return table;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRecord>& records) {
  out << "country,product_id,scheme,hh_id,year,metric_id,value,missing_flag,proxy_flag\n";
  for (const auto& r : records) {
    const bool missing = !std::isfinite(r.value);
    out << r.country << ',' << r.product_id << ',' << r.scheme << ',' << r.hh_id << ',' << r.year << ','
        << metric_name(r.metric) << ',' << format_double(missing ? kNaN : r.value) << ',' << (missing ? 1 : 0)
        << ',' << (r.proxy ? 1 : 0) << '\n';
  }
}

MergedPanel merge_weather(const std::vector<SurveyRow>& panel, const MetricTable& metrics,
                          const std::vector<MetricSelection>& selections) {
  MergedPanel merged;
  merged.selections = selections;
  merged.columns.resize(selections.size());
  std::set<std::string> countries;
  for (const auto& r : panel) countries.insert(r.country);
  for (const auto& c : countries)
    for (const auto& sel : selections)
      if (metrics.ambiguous(c, sel))
        throw Error(ErrorCode::AmbiguousJoin, "duplicate metric keys for " + c + ":" + sel.label());

  // columns resolved once per country
  std::map<std::string, std::vector<MetricTable::Column>> columns;
  for (const auto& c : countries)
    for (const auto& sel : selections) columns[c].push_back(metrics.column(c, sel));

  std::vector<double> values(selections.size());
  const std::string* last_country = nullptr;
  const std::vector<MetricTable::Column>* cols = nullptr;
  merged.rows.reserve(panel.size());
  for (auto& c : merged.columns) c.reserve(panel.size());
  for (const auto& row : panel) {
    if (last_country == nullptr || *last_country != row.country) {
      cols = &columns.at(row.country);
      last_country = &row.country;
    }
    std::string reason;
    for (std::size_t k = 0; k < selections.size(); ++k) {
      const auto* e = (*cols)[k].find(row.hh_id, row.year);
      if (e == nullptr) {
        reason = "no_metric";
        break;
      }
      if (!std::isfinite(e->value)) {
        reason = "missing_value";
        break;
      }
      values[k] = e->value;
    }
    if (!reason.empty()) {
      merged.drops.push_back({row.country + "|" + row.hh_id + "|" + std::to_string(row.year), reason});
      continue;
    }
    merged.rows.push_back(row);
    for (std::size_t k = 0; k < selections.size(); ++k) merged.columns[k].push_back(values[k]);
  }
  return merged;
}

void write_merged_csv(std::ostream& out, const MergedPanel& merged) {
  std::vector<SurveyRow> rows = merged.rows;
  const auto survey = survey_csv_text(rows);
  std::istringstream lines(survey);
  std::string line;
  std::getline(lines, line);
  out << line;
  for (const auto& sel : merged.selections) out << ',' << sel.label();
  out << '\n';
  for (std::size_t i = 0; std::getline(lines, line); ++i) {
    out << line;
    for (const auto& column : merged.columns) out << ',' << format_double(column[i]);
    out << '\n';
  }
}

void write_drops_csv(std::ostream& out, const std::vector<DropRecord>& drops) {
  out << "key,reason\n";
  for (const auto& d : drops) out << d.key << ',' << d.reason << '\n';
}

// ---------------------------------------------------------------------------

void validate(const SynthSurveyConfig& c) {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (c.admin_rows <= 0 || c.admin_cols <= 0 || c.eas_per_admin <= 0 || c.households_per_ea <= 0)
    bad("survey counts must be positive");
  if (c.waves.empty()) bad("survey needs at least one wave");
  if (!(c.noise_sd > 0.0)) bad("noise_sd must be positive");
  if (c.hh_effect_sd < 0.0) bad("hh_effect_sd must be non-negative");
  if (c.urban_share < 0.0 || c.urban_share > 1.0) bad("urban_share must lie in [0,1]");
  if (c.mover_share < 0.0 || c.mover_share > 1.0) bad("mover_share must lie in [0,1]");
  if (c.hh_scatter_km < 0.0) bad("hh_scatter_km must be non-negative");
  if (!(c.yield_level > 0.0) || !(c.value_level > 0.0)) bad("outcome levels must be positive");
}

namespace {

std::string padded(std::string_view prefix, int value) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", value);
  return std::string(prefix) + buf;
}

}  // namespace

std::vector<HouseholdGeo> synth_households(const SynthSurveyConfig& config, const Rectangle& extent,
                                           std::map<std::string, AdminUnit>& admins_out) {
  validate(config);
  const double west = extent.west + config.margin_deg, east = extent.east - config.margin_deg;
  const double south = extent.south + config.margin_deg, north = extent.north - config.margin_deg;
  if (!(east > west) || !(north > south))
    throw Error(ErrorCode::InvalidConfig, "survey margin leaves no room inside the extent of " + config.country);
  const double dlon = (east - west) / config.admin_cols;
  const double dlat = (north - south) / config.admin_rows;

  std::mt19937_64 rng(derive_seed(config.seed, "geo:" + config.country));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<HouseholdGeo> households;
  int admin_index = 0;
  for (int ar = 0; ar < config.admin_rows; ++ar) {
    for (int ac = 0; ac < config.admin_cols; ++ac, ++admin_index) {
      const std::string admin_id = padded(config.country + "-a", admin_index);
      AdminUnit unit_geo;
      unit_geo.bounds = {west + ac * dlon, north - (ar + 1) * dlat, west + (ac + 1) * dlon, north - ar * dlat};
      unit_geo.centroid = {0.5 * (unit_geo.bounds.west + unit_geo.bounds.east),
                           0.5 * (unit_geo.bounds.south + unit_geo.bounds.north)};
      admins_out[admin_id] = unit_geo;
      for (int e = 0; e < config.eas_per_admin; ++e) {
        const std::string ea_id = padded(admin_id + "-e", e);
        const GeoPoint center{unit_geo.bounds.west + dlon * (0.1 + 0.8 * unit(rng)),
                              unit_geo.bounds.south + dlat * (0.1 + 0.8 * unit(rng))};
        const bool urban = unit(rng) < config.urban_share;
        for (int h = 0; h < config.households_per_ea; ++h) {
          const double bearing = 2.0 * std::numbers::pi * unit(rng);
          const double dist = config.hh_scatter_km * unit(rng);
          households.push_back({padded(ea_id + "-h", h), ea_id, admin_id, destination(center, bearing, dist), urban});
        }
      }
    }
  }
  return households;
}

std::vector<SurveyRow> synth_survey(const SynthSurveyConfig& config, const GeoContext& ctx,
                                    const DriverValues& driver) {
  validate(config);
  std::mt19937_64 rng(derive_seed(config.seed, "survey:" + config.country));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  struct Draw {
    SurveyRow row;
    double f = 0.0;
    double a_yield = 0.0, a_value = 0.0;
    double e_yield = 0.0, e_value = 0.0;
    std::size_t wave_index = 0;
  };
  std::vector<Draw> draws;
  for (const auto& [hh_id, hh] : ctx.households) {
    const double a_yield = config.hh_effect_sd * normal(rng);
    const double a_value = config.hh_effect_sd * normal(rng);
    const bool mover = unit(rng) < config.mover_share;
    for (std::size_t w = 0; w < config.waves.size(); ++w) {
      const int year = config.waves[w];
      const auto it = driver.find({hh_id, year});
      if (it == driver.end() || !std::isfinite(it->second))
        throw Error(ErrorCode::MissingMetric, "no driver value for " + hh_id + " in " + std::to_string(year));
      Draw d;
      d.row.country = config.country;
      d.row.hh_id = hh_id;
      d.row.ea_id = hh.ea_id;
      d.row.admin_id = hh.admin_id;
      d.row.year = year;
      d.row.wave = static_cast<int>(w) + 1;
      d.row.labor_rate = std::exp(std::log(250.0) + 0.6 * normal(rng));
      d.row.fertilizer_rate = unit(rng) < 0.4 ? 0.0 : std::exp(std::log(50.0) + 0.8 * normal(rng));
      d.row.seed_rate = std::exp(std::log(20.0) + 0.5 * normal(rng));
      d.row.pesticide = unit(rng) < 0.08 ? 1 : 0;
      d.row.herbicide = unit(rng) < 0.15 ? 1 : 0;
      d.row.irrigation = unit(rng) < 0.04 ? 1 : 0;
      d.row.mover = (mover && w > 0) ? 1 : 0;
      d.f = uses_ihs(config.driver) ? ihs(it->second) : it->second;
      d.a_yield = a_yield;
      d.a_value = a_value;
      d.e_yield = config.noise_sd * normal(rng);
      d.e_value = config.noise_sd * normal(rng);
      d.wave_index = w;
      draws.push_back(std::move(d));
    }
  }

  // center the linear predictor so outcome levels track the configured medians
  const auto n = static_cast<double>(draws.size());
  double f_mean = 0.0, f2_mean = 0.0;
  std::array<double, 6> x_mean{};
  for (const auto& d : draws) {
    f_mean += d.f / n;
    f2_mean += d.f * d.f / n;
    const auto x = d.row.transformed_inputs();
    for (std::size_t k = 0; k < x.size(); ++k) x_mean[k] += x[k] / n;
  }

  std::vector<SurveyRow> rows;
  rows.reserve(draws.size());
  for (auto& d : draws) {
    const auto x = d.row.transformed_inputs();
    double common = config.beta * (d.f - f_mean) + config.beta2 * (d.f * d.f - f2_mean);
    for (std::size_t k = 0; k < x.size(); ++k) common += config.pi[k] * (x[k] - x_mean[k]);
    if (d.wave_index < config.year_effects.size()) common += config.year_effects[d.wave_index];
    d.row.primary_crop_yield = std::max(0.0, std::sinh(ihs(config.yield_level) + d.a_yield + common + d.e_yield));
    d.row.total_farm_value = std::max(0.0, std::sinh(ihs(config.value_level) + d.a_value + common + d.e_value));
    rows.push_back(std::move(d.row));
  }
  return rows;
}

}  // namespace agw
