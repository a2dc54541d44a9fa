#include "agw/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "agw/csv.hpp"
#include "agw/random.hpp"

namespace agw {

namespace fs = std::filesystem;

const ProductSetup& PipelineConfig::product(const std::string& id) const {
  for (const auto& p : products)
    if (p.id == id) return p;
  throw Error(ErrorCode::InvalidConfig, "unknown product '" + id + "' (not listed in [products])");
}

const CountrySetup& PipelineConfig::country(const std::string& name) const {
  for (const auto& c : countries)
    if (c.name == name) return c;
  throw Error(ErrorCode::InvalidConfig, "unknown country '" + name + "' (not listed in [countries] use)");
}

// ---------------------------------------------------------------------------
// config

namespace {

const std::vector<std::string> kSections = {"run",     "countries", "products", "weather", "survey",
                                            "geo",     "schemes",   "metrics",  "specs",   "outputs"};

template <class F>
auto keyed(std::string_view section, std::string_view key, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InvalidConfig) throw;
    const std::string what = e.what();
    const std::string label = config_key(section, key);
    if (what.find(label) != std::string::npos) throw;
    throw Error(ErrorCode::InvalidConfig, label + ": " + what.substr(what.find(": ") + 2));
  }
}

Rectangle parse_extent(const Config& c, const std::string& name) {
  const std::string key = name + ".extent";
  const auto v = c.get_doubles("countries", key);
  if (v.size() != 4 || !(v[2] > v[0]) || !(v[3] > v[1]))
    throw Error(ErrorCode::InvalidConfig, config_key("countries", key) + ": expected west, south, east, north");
  return {v[0], v[1], v[2], v[3]};
}

void read_synth_params(const Config& c, const std::string& id, SynthWeatherConfig& s) {
  auto num = [&](const char* name, double& field) {
    field = c.get_double_or("products", id + "." + name, field);
  };
  double cell = c.get_double_or("products", id + ".cell_size", s.cell_size_lon);
  s.cell_size_lon = c.get_double_or("products", id + ".cell_size_lon", cell);
  s.cell_size_lat = c.get_double_or("products", id + ".cell_size_lat", cell);
  num("gamma_shape", s.gamma_shape);
  num("gamma_scale", s.gamma_scale);
  num("wet_prob_mean", s.wet_prob_mean);
  num("wet_prob_amplitude", s.wet_prob_amplitude);
  num("temp_mean_c", s.temp_mean_c);
  num("temp_amplitude_c", s.temp_amplitude_c);
  num("temp_noise_sd_c", s.temp_noise_sd_c);
  num("tmax_offset_c", s.tmax_offset_c);
  num("correlation_km", s.correlation_km);
  s.wet_peak_doy = static_cast<int>(c.get_int_or("products", id + ".wet_peak_doy", s.wet_peak_doy));
  s.temp_peak_doy = static_cast<int>(c.get_int_or("products", id + ".temp_peak_doy", s.temp_peak_doy));
  s.product_id = id;
}

std::vector<ObfuscationScheme> parse_schemes(const std::vector<std::string>& items) {
  if (items.size() == 1 && items[0] == "all") return {kAllSchemes.begin(), kAllSchemes.end()};
  std::vector<ObfuscationScheme> out;
  for (const auto& s : items) out.push_back(parse_scheme(s));
  return out;
}

std::vector<MetricId> parse_metrics(const std::vector<std::string>& items) {
  if (items.size() == 1 && items[0] == "all") return all_metrics();
  std::vector<MetricId> out;
  for (const auto& s : items) {
    if (s == "rain" || s == "temp") {
      for (auto m : metrics_of(s == "rain" ? MetricFamily::Rain : MetricFamily::Temp)) out.push_back(m);
      continue;
    }
    out.push_back(parse_metric(s));
  }
  return out;
}

std::vector<RegressionSpec> parse_specs(const std::vector<std::string>& items) {
  if (items.size() == 1 && items[0] == "all") return canonical_specs();
  std::vector<RegressionSpec> out;
  for (const auto& s : items) out.push_back(parse_spec(s));
  return out;
}

MetricSelection parse_selection(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 3) throw Error(ErrorCode::InvalidConfig, "selection '" + text + "' is not product:scheme:metric");
  return {std::string(trim(parts[0])), std::string(scheme_name(parse_scheme(parts[1]))), parse_metric(parts[2])};
}

}  // namespace

PipelineConfig pipeline_config(const Config& c) {
  for (const auto& s : kSections) c.require_section(s);
  PipelineConfig p;

  p.seed = keyed("run", "seed", [&] { return static_cast<std::uint64_t>(c.get_int("run", "seed")); });
  p.threads = static_cast<unsigned>(std::max(1LL, c.get_int_or("run", "threads", 1)));
  if (const char* env = std::getenv("AGW_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw Error(ErrorCode::InvalidConfig, "AGW_THREADS must be a positive integer");
    p.threads = static_cast<unsigned>(v);
  }
  p.out_dir = c.get_or("run", "out", "out");

  for (const auto& name : c.get_list("countries", "use")) {
    CountrySetup cs;
    cs.name = name;
    cs.extent = parse_extent(c, name);
    cs.season = keyed("countries", name + ".season", [&] { return parse_season(c.get("countries", name + ".season")); });
    p.countries.push_back(cs);
  }
  if (p.countries.empty()) throw Error(ErrorCode::InvalidConfig, config_key("countries", "use") + ": empty list");

  const auto rain = c.get_list("products", "rain");
  const auto temp = c.get_list("products", "temp");
  std::vector<std::string> ids;
  for (const auto& list : {rain, temp})
    for (const auto& id : list)
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  if (ids.empty()) throw Error(ErrorCode::InvalidConfig, config_key("products", "rain") + ": no products configured");
  for (const auto& id : ids) {
    ProductSetup ps;
    ps.id = id;
    ps.rain = std::find(rain.begin(), rain.end(), id) != rain.end();
    ps.temp = std::find(temp.begin(), temp.end(), id) != temp.end();
    ps.has_max = ps.temp && c.get_bool_or("products", id + ".has_max", false);
    read_synth_params(c, id, ps.synth);
    p.products.push_back(ps);
  }

  p.weather_start = keyed("weather", "start", [&] { return parse_date(c.get("weather", "start")); });
  p.weather_end = keyed("weather", "end", [&] { return parse_date(c.get("weather", "end")); });
  if (p.weather_end < p.weather_start)
    throw Error(ErrorCode::InvalidConfig, config_key("weather", "end") + ": precedes [weather] start");
  for (const auto& ps : p.products) {
    auto s = ps.synth;
    s.west = 0.0, s.south = 0.0, s.east = 1.0, s.north = 1.0;
    s.start_date = p.weather_start;
    s.end_date = p.weather_end;
    keyed("products", ps.id, [&] {
      validate(s);
      return 0;
    });
  }

  auto& sv = p.survey;
  auto count = [&](const char* key, int& field) { field = static_cast<int>(c.get_int_or("survey", key, field)); };
  auto num = [&](const char* key, double& field) { field = c.get_double_or("survey", key, field); };
  count("admin_rows", sv.admin_rows);
  count("admin_cols", sv.admin_cols);
  count("eas_per_admin", sv.eas_per_admin);
  count("households_per_ea", sv.households_per_ea);
  num("margin_deg", sv.margin_deg);
  num("hh_scatter_km", sv.hh_scatter_km);
  num("urban_share", sv.urban_share);
  num("mover_share", sv.mover_share);
  num("beta", sv.beta);
  num("beta2", sv.beta2);
  num("hh_effect_sd", sv.hh_effect_sd);
  num("noise_sd", sv.noise_sd);
  num("yield_level", sv.yield_level);
  num("value_level", sv.value_level);
  if (c.find("survey", "waves")) {
    sv.waves.clear();
    for (double w : c.get_doubles("survey", "waves")) sv.waves.push_back(static_cast<int>(w));
  }
  if (c.find("survey", "year_effects")) sv.year_effects = c.get_doubles("survey", "year_effects");
  if (c.find("survey", "pi")) {
    const auto v = c.get_doubles("survey", "pi");
    if (v.size() != sv.pi.size()) throw Error(ErrorCode::InvalidConfig, config_key("survey", "pi") + ": needs 6 values");
    std::copy(v.begin(), v.end(), sv.pi.begin());
  }
  sv.seed = static_cast<std::uint64_t>(c.get_int_or("survey", "seed", static_cast<long long>(p.seed)));
  sv.driver = keyed("survey", "driver_metric", [&] { return parse_metric(c.get("survey", "driver_metric")); });
  p.driver_product = c.get("survey", "driver_product");
  const auto& driver = keyed("survey", "driver_product", [&]() -> const ProductSetup& { return p.product(p.driver_product); });
  if ((family_of(sv.driver) == MetricFamily::Rain && !driver.rain) ||
      (family_of(sv.driver) == MetricFamily::Temp && !driver.temp))
    throw Error(ErrorCode::InvalidConfig,
                config_key("survey", "driver_product") + ": product does not provide the driver metric's variable");
  keyed("survey", "waves", [&] {
    validate(sv);
    return 0;
  });

  p.ea_buffer_km = c.get_double_or("geo", "ea_buffer_km", p.ea_buffer_km);
  p.radii.urban_km = c.get_double_or("geo", "urban_km", p.radii.urban_km);
  p.radii.rural_km = c.get_double_or("geo", "rural_km", p.radii.rural_km);
  p.radii.rural_far_km = c.get_double_or("geo", "rural_far_km", p.radii.rural_far_km);
  p.radii.rural_far_probability = c.get_double_or("geo", "rural_far_probability", p.radii.rural_far_probability);
  if (!(p.ea_buffer_km > 0.0)) throw Error(ErrorCode::InvalidConfig, config_key("geo", "ea_buffer_km") + ": must be positive");

  auto& b = p.battery;
  for (const auto& cs : p.countries) b.countries.push_back(cs.name);
  b.rain_products = rain;
  b.temp_products = temp;
  b.schemes = keyed("schemes", "use", [&] { return parse_schemes(c.get_list("schemes", "use")); });
  b.metrics = keyed("metrics", "use", [&] { return parse_metrics(c.get_list("metrics", "use")); });
  p.gdd.low_c = c.get_double_or("metrics", "gdd_low_c", p.gdd.low_c);
  p.gdd.high_c = c.get_double_or("metrics", "gdd_high_c", p.gdd.high_c);
  if (!(p.gdd.high_c > p.gdd.low_c))
    throw Error(ErrorCode::InvalidConfig, config_key("metrics", "gdd_high_c") + ": must exceed gdd_low_c");
  b.specs = keyed("specs", "use", [&] { return parse_specs(c.get_list("specs", "use")); });
  if (c.find("specs", "outcomes")) {
    b.outcomes.clear();
    for (const auto& o : c.get_list("specs", "outcomes"))
      b.outcomes.push_back(keyed("specs", "outcomes", [&] { return parse_outcome(o); }));
  }
  b.combinations = c.get_bool_or("specs", "combinations", false);
  b.rule = keyed("specs", "rule", [&] { return parse_rule(c.get_or("specs", "rule", "joint")); });
  b.threads = p.threads;

  if (c.find("outputs", "group_by")) p.group_by = c.get_list("outputs", "group_by");
  if (c.find("outputs", "levels")) p.levels = c.get_doubles("outputs", "levels");
  for (double l : p.levels)
    if (!(l > 0.0 && l < 1.0)) throw Error(ErrorCode::InvalidConfig, config_key("outputs", "levels") + ": must lie in (0,1)");
  if (auto v = c.find("outputs", "rain_reference"))
    p.rain_reference = keyed("outputs", "rain_reference", [&] { return parse_metric(*v); });
  if (auto v = c.find("outputs", "temp_reference"))
    p.temp_reference = keyed("outputs", "temp_reference", [&] { return parse_metric(*v); });
  if (c.find("outputs", "spec_curve_filter"))
    for (const auto& item : c.get_list("outputs", "spec_curve_filter")) {
      const auto eq = item.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorCode::InvalidConfig, config_key("outputs", "spec_curve_filter") + ": expected dim=value");
      p.spec_curve_filter.equals[std::string(trim(item.substr(0, eq)))] = std::string(trim(item.substr(eq + 1)));
    }
  if (c.find("outputs", "merge"))
    for (const auto& item : c.get_list("outputs", "merge"))
      p.merge_selections.push_back(keyed("outputs", "merge", [&] { return parse_selection(item); }));
  if (p.merge_selections.empty()) {
    const std::string product = rain.empty() ? temp.front() : rain.front();
    const MetricId metric = rain.empty() ? p.temp_reference : p.rain_reference;
    p.merge_selections.push_back({product, std::string(scheme_name(b.schemes.front())), metric});
  }
  p.series_households = static_cast<std::size_t>(std::max(0LL, c.get_int_or("outputs", "series_households", 5)));
  return p;
}

// ---------------------------------------------------------------------------
// layout

namespace {

std::string_view kind_suffix(VariableKind kind) {
  switch (kind) {
    case VariableKind::Rainfall: return "rain";
    case VariableKind::TempMean: return "tmean";
    case VariableKind::TempMax: return "tmax";
  }
  return "unknown";
}

}  // namespace

fs::path Layout::raster(const std::string& country, const std::string& product, VariableKind kind) const {
  return root / "weather" / country / (product + "_" + std::string(kind_suffix(kind)) + ".agwx");
}

fs::path Layout::households(const std::string& country) const { return root / country / "households.csv"; }
fs::path Layout::admin(const std::string& country) const { return root / country / "admin.csv"; }

std::uint64_t offset_seed(const PipelineConfig& config, const std::string& country) {
  return derive_seed(config.seed, "offsets:" + country);
}

// ---------------------------------------------------------------------------
// stages

namespace {

fs::path require_input(const fs::path& path, StageReport& report) {
  if (!fs::exists(path))
    throw Error(ErrorCode::InvalidConfig, "input " + path.string() + " does not exist; run the producing stage first");
  report.inputs.push_back(path);
  return path;
}

RasterStack load_input(const fs::path& path, StageReport& report) {
  return load_raster_stack(require_input(path, report));
}

GeoContext load_context(const PipelineConfig& config, const Layout& layout, const std::string& country,
                        StageReport* report) {
  const auto hh = layout.households(country);
  const auto ad = layout.admin(country);
  if (report != nullptr) {
    require_input(hh, *report);
    require_input(ad, *report);
  }
  return load_geo_context(hh, ad, config.ea_buffer_km, offset_seed(config, country), config.radii);
}

/// Zones that capture no cell center fall back to the cell holding the zone's center.
DailySeries extract_feature(const RasterStack& stack, const FeatureRef& feature) {
  try {
    return extract(stack, feature, full_range(stack));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyZone) throw;
    const auto& zone = std::get<ZonePolygon>(feature);
    GeoPoint center;
    if (const auto* c = std::get_if<Circle>(&zone)) {
      center = c->center;
    } else {
      const auto& r = std::get<Rectangle>(zone);
      center = {(r.west + r.east) / 2.0, (r.south + r.north) / 2.0};
    }
    return extract_simple(stack, center, full_range(stack));
  }
}

std::string hex_bits(double v) {
  std::ostringstream s;
  s << std::hex << std::bit_cast<std::uint64_t>(v);
  return s.str();
}

std::string feature_key(const FeatureRef& f) {
  if (const auto* p = std::get_if<PointFeature>(&f))
    return "p" + std::to_string(static_cast<int>(p->method)) + ":" + hex_bits(p->point.lon) + ":" + hex_bits(p->point.lat);
  const auto& zone = std::get<ZonePolygon>(f);
  if (const auto* c = std::get_if<Circle>(&zone))
    return "c:" + hex_bits(c->center.lon) + ":" + hex_bits(c->center.lat) + ":" + hex_bits(c->radius_km);
  const auto& r = std::get<Rectangle>(zone);
  return "r:" + hex_bits(r.west) + ":" + hex_bits(r.south) + ":" + hex_bits(r.east) + ":" + hex_bits(r.north);
}

struct ProductStacks {
  std::optional<RasterStack> rain, tmean, tmax;
};

ProductStacks load_product(const Layout& layout, const std::string& country,
                           const ProductSetup& product, bool want_rain, bool want_temp, StageReport* report) {
  ProductStacks s;
  StageReport scratch;
  StageReport& r = report != nullptr ? *report : scratch;
  if (want_rain && product.rain) s.rain = load_input(layout.raster(country, product.id, VariableKind::Rainfall), r);
  if (want_temp && product.temp) {
    s.tmean = load_input(layout.raster(country, product.id, VariableKind::TempMean), r);
    if (product.has_max) s.tmax = load_input(layout.raster(country, product.id, VariableKind::TempMax), r);
  }
  return s;
}

std::vector<SurveyRow> read_survey(const Layout& layout, StageReport& report) {
  return load_survey_csv(require_input(layout.file("survey.csv"), report)).rows;
}

std::vector<ResultRow> read_results(const Layout& layout, StageReport& report) {
  return read_results_csv(require_input(layout.file("results.csv"), report));
}

template <class F>
void write_output(const fs::path& path, StageReport& report, F&& body) {
  AtomicWriter w(path);
  body(w.stream());
  w.commit();
  report.outputs.push_back(path);
}

}  // namespace

void stage_synth_weather(const PipelineConfig& config, StageReport& report) {
  const Layout layout{config.out_dir};
  for (const auto& country : config.countries)
    for (const auto& product : config.products) {
      auto s = product.synth;
      s.west = country.extent.west;
      s.south = country.extent.south;
      s.east = country.extent.east;
      s.north = country.extent.north;
      s.start_date = config.weather_start;
      s.end_date = config.weather_end;
      auto emit = [&](VariableKind kind, std::string_view stream) {
        s.variable_kind = kind;
        s.seed = derive_seed(config.seed, "weather:" + country.name + ":" + product.id + ":" + std::string(stream));
        const auto path = layout.raster(country.name, product.id, kind);
        save_raster_stack(synth_weather(s), path);
        report.outputs.push_back(path);
      };
      if (product.rain) emit(VariableKind::Rainfall, "rain");
      if (product.temp) {
        emit(VariableKind::TempMean, "temp");
        if (product.has_max) emit(VariableKind::TempMax, "temp");
      }
    }
}

void stage_synth_survey(const PipelineConfig& config, StageReport& report) {
  const Layout layout{config.out_dir};
  const auto& driver_product = config.product(config.driver_product);
  const bool rain_driver = family_of(config.survey.driver) == MetricFamily::Rain;
  std::vector<SurveyRow> all;
  for (const auto& country : config.countries) {
    auto sc = config.survey;
    sc.country = country.name;
    std::map<std::string, AdminUnit> admins;
    const auto households = synth_households(sc, country.extent, admins);
    const auto ctx = build_geo_context(households, admins, config.ea_buffer_km, offset_seed(config, country.name),
                                       config.radii);
    save_geo_context(ctx, layout.households(country.name), layout.admin(country.name));
    report.outputs.push_back(layout.households(country.name));
    report.outputs.push_back(layout.admin(country.name));

    // the outcome responds to weather at the true household location
    const auto stacks = load_product(layout, country.name, driver_product, rain_driver, !rain_driver, &report);
    DriverValues driver;
    for (const auto& [id, hh] : ctx.households) {
      LocationSeries loc;
      std::optional<DailySeries> rain, tmean, tmax;
      if (stacks.rain) rain = extract_bilinear(*stacks.rain, hh.location, full_range(*stacks.rain));
      if (stacks.tmean) tmean = extract_bilinear(*stacks.tmean, hh.location, full_range(*stacks.tmean));
      if (stacks.tmax) tmax = extract_bilinear(*stacks.tmax, hh.location, full_range(*stacks.tmax));
      loc.rain = rain ? &*rain : nullptr;
      loc.temp_mean = tmean ? &*tmean : nullptr;
      loc.temp_max = tmax ? &*tmax : nullptr;
      for (const auto& [year, set] : location_metrics(loc, country.season, sc.waves, config.gdd))
        driver[{id, year}] = set[sc.driver];
    }
    auto rows = synth_survey(sc, ctx, driver);
    all.insert(all.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
  }
  save_survey_csv(all, layout.file("survey.csv"));
  report.outputs.push_back(layout.file("survey.csv"));
}

void stage_extract(const PipelineConfig& config, StageReport& report) {
  const Layout layout{config.out_dir};
  write_output(layout.file("series.csv"), report, [&](std::ostream& out) {
    out << "country,product_id,variable,scheme,hh_id,date,value\n";
    for (const auto& country : config.countries) {
      const auto ctx = load_context(config, layout, country.name, &report);
      for (const auto& product : config.products) {
        const auto stacks = load_product(layout, country.name, product, true, true, &report);
        for (const auto* stack : {stacks.rain ? &*stacks.rain : nullptr, stacks.tmean ? &*stacks.tmean : nullptr,
                                  stacks.tmax ? &*stacks.tmax : nullptr}) {
          if (stack == nullptr) continue;
          for (auto scheme : config.battery.schemes) {
            std::size_t emitted = 0;
            for (const auto& [id, hh] : ctx.households) {
              if (emitted++ >= config.series_households) break;
              auto series = extract_feature(*stack, resolve_feature(scheme, id, ctx));
              for (int year : config.survey.waves) {
                const auto range = season_dates(country.season, year);
                if (range.first < series.start_date ||
                    range.end() > series.start_date + std::chrono::days{static_cast<long>(series.values.size())})
                  continue;
                const auto offset = static_cast<std::size_t>((range.first - series.start_date).count());
                for (std::size_t d = 0; d < range.n_days; ++d)
                  out << country.name << ',' << product.id << ',' << to_string(stack->variable_kind) << ','
                      << scheme_name(scheme) << ',' << id << ','
                      << format_date(range.first + std::chrono::days{static_cast<long>(d)}) << ','
                      << format_double(series.values[offset + d]) << '\n';
              }
            }
          }
        }
      }
    }
  });
}

std::vector<MetricRecord> compute_country_metrics(const PipelineConfig& config, const CountrySetup& country,
                                                  const GeoContext& ctx, const Layout& layout) {
  bool want_rain = false, want_temp = false;
  for (auto m : config.battery.metrics) (family_of(m) == MetricFamily::Rain ? want_rain : want_temp) = true;
  std::vector<MetricRecord> records;
  for (const auto& product : config.products) {
    const auto stacks = load_product(layout, country.name, product, want_rain, want_temp, nullptr);
    std::map<std::string, std::map<int, WeatherMetricSet>> rain_cache, temp_cache;
    auto metrics_for = [&](const FeatureRef& feature, bool rain) -> const std::map<int, WeatherMetricSet>& {
      auto& cache = rain ? rain_cache : temp_cache;
      const auto key = feature_key(feature);
      if (auto it = cache.find(key); it != cache.end()) return it->second;
      LocationSeries loc;
      std::optional<DailySeries> a, b;
      if (rain) {
        a = extract_feature(*stacks.rain, feature);
        loc.rain = &*a;
      } else {
        a = extract_feature(*stacks.tmean, feature);
        loc.temp_mean = &*a;
        if (stacks.tmax) {
          b = extract_feature(*stacks.tmax, feature);
          loc.temp_max = &*b;
        }
      }
      return cache.emplace(key, location_metrics(loc, country.season, config.survey.waves, config.gdd)).first->second;
    };
    for (auto scheme : config.battery.schemes) {
      const std::string sname(scheme_name(scheme));
      for (const auto& [id, hh] : ctx.households) {
        const auto feature = resolve_feature(scheme, id, ctx);
        for (bool rain : {true, false}) {
          if (rain ? !stacks.rain : !stacks.tmean) continue;
          const auto& by_year = metrics_for(feature, rain);
          for (int year : config.survey.waves) {
            const auto& set = by_year.at(year);
            for (auto m : config.battery.metrics) {
              if ((family_of(m) == MetricFamily::Rain) != rain) continue;
              records.push_back({country.name, product.id, sname, id, year, m, set[m],
                                 m == MetricId::TempMaxAvg && set.tmax_proxy});
            }
          }
        }
      }
    }
  }
  return records;
}

void stage_metrics(const PipelineConfig& config, StageReport& report) {
  const Layout layout{config.out_dir};
  std::vector<MetricRecord> all;
  for (const auto& country : config.countries) {
    const auto ctx = load_context(config, layout, country.name, &report);
    for (const auto& product : config.products)
      for (auto kind : {VariableKind::Rainfall, VariableKind::TempMean, VariableKind::TempMax}) {
        const auto path = layout.raster(country.name, product.id, kind);
        if (fs::exists(path)) report.inputs.push_back(path);
      }
    auto records = compute_country_metrics(config, country, ctx, layout);
    all.insert(all.end(), std::make_move_iterator(records.begin()), std::make_move_iterator(records.end()));
  }
  write_output(layout.file("metrics.csv"), report, [&](std::ostream& out) { write_metrics_csv(out, all); });
}

void stage_merge(const PipelineConfig& config, StageReport& report) {
  const Layout layout{config.out_dir};
  const auto survey = read_survey(layout, report);
  const auto metrics = load_metrics_csv(require_input(layout.file("metrics.csv"), report));
  const auto merged = merge_weather(survey, metrics, config.merge_selections);
  write_output(layout.file("merged.csv"), report, [&](std::ostream& out) { write_merged_csv(out, merged); });
  write_output(layout.file("drops.csv"), report, [&](std::ostream& out) { write_drops_csv(out, merged.drops); });
}

void stage_battery(const PipelineConfig& config, StageReport& report) {
  const Layout layout{config.out_dir};
  const auto survey = read_survey(layout, report);
  const auto metrics = load_metrics_csv(require_input(layout.file("metrics.csv"), report));
  const auto keys = enumerate_runs(config.battery);
  const auto rows = run_battery(config.battery, keys, {&survey, &metrics});
  write_output(layout.file("results.csv"), report, [&](std::ostream& out) { write_results_csv(out, rows); });
}

void stage_summarize(const PipelineConfig& config, StageReport& report) {
  const Layout layout{config.out_dir};
  const auto rows = read_results(layout, report);
  const auto shares = significance_shares(rows, config.group_by, config.levels, config.battery.rule);
  const auto r2 = r2_summary(rows, config.group_by);
  write_output(layout.file("shares.csv"), report,
               [&](std::ostream& out) { write_shares_csv(out, config.group_by, shares); });
  write_output(layout.file("r2.csv"), report, [&](std::ostream& out) { write_r2_csv(out, config.group_by, r2); });
}

void stage_spec_curve(const PipelineConfig& config, StageReport& report) {
  const Layout layout{config.out_dir};
  const auto rows = read_results(layout, report);
  const auto points = spec_curve_export(rows, config.spec_curve_filter, config.battery.rule);
  write_output(layout.file("spec_curve.csv"), report, [&](std::ostream& out) { write_spec_curve_csv(out, points); });
}

void stage_diff_test(const PipelineConfig& config, StageReport& report) {
  const Layout layout{config.out_dir};
  const auto rows = read_results(layout, report);
  std::vector<DiffVerdict> verdicts;
  for (auto reference : {config.rain_reference, config.temp_reference}) {
    const auto fam = family_name(family_of(reference));
    const bool present = std::any_of(rows.begin(), rows.end(), [&](const ResultRow& r) { return r.key.family() == fam; });
    if (!present) continue;
    auto v = reference_comparison(rows, reference);
    verdicts.insert(verdicts.end(), v.begin(), v.end());
  }
  write_output(layout.file("diff_tests.csv"), report, [&](std::ostream& out) { write_diff_csv(out, verdicts); });
}

StageReport run_command(std::string_view command, const PipelineConfig& config) {
  using Stage = void (*)(const PipelineConfig&, StageReport&);
  static const std::map<std::string_view, Stage> stages = {
      {"synth-weather", stage_synth_weather}, {"synth-survey", stage_synth_survey}, {"extract", stage_extract},
      {"metrics", stage_metrics},             {"merge", stage_merge},               {"battery", stage_battery},
      {"summarize", stage_summarize},         {"spec-curve", stage_spec_curve},     {"diff-test", stage_diff_test},
  };
  const auto it = stages.find(command);
  if (it == stages.end()) throw Error(ErrorCode::InvalidConfig, "unknown command '" + std::string(command) + "'");
  StageReport report;
  const auto t0 = std::chrono::steady_clock::now();
  it->second(config, report);
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  report.timings.emplace_back(std::string(command), dt.count());
  return report;
}

// ---------------------------------------------------------------------------
// manifest

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

}  // namespace

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  std::uint64_t h = 0xCBF29CE484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return hex64(h);
}

void write_manifest(const fs::path& path, std::string_view command, const Config& config,
                    const PipelineConfig& pipeline, const StageReport& report) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config_hash"] = hex64(config.hash());
  j["seed"] = pipeline.seed;
  j["version"] = kVersion;
  j["threads"] = pipeline.threads;
  auto& timings = j["timings"] = nlohmann::ordered_json::object();
  for (const auto& [stage, seconds] : report.timings) timings[stage] = seconds;
  auto digests = [](const std::vector<fs::path>& files) {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    std::set<std::string> seen;
    for (const auto& f : files)
      if (seen.insert(f.string()).second) out[f.string()] = file_digest(f);
    return out;
  };
  j["inputs"] = digests(report.inputs);
  j["outputs"] = digests(report.outputs);
  write_text_atomic(path, j.dump(2) + "\n");
}

}  // namespace agw
