#include "agw/geo.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "agw/csv.hpp"
#include "agw/error.hpp"
#include "agw/random.hpp"

namespace agw {

bool contains(const ZonePolygon& zone, const GeoPoint& p) {
  return std::visit(
      [&](const auto& z) -> bool {
        using T = std::decay_t<decltype(z)>;
        if constexpr (std::is_same_v<T, Circle>) {
          return haversine_km(z.center, p) <= z.radius_km;
        } else {
          return p.lon >= z.west && p.lon <= z.east && p.lat >= z.south && p.lat <= z.north;
        }
      },
      zone);
}

std::string_view scheme_name(ObfuscationScheme scheme) {
  switch (scheme) {
    case ObfuscationScheme::HH_simple: return "HH_simple";
    case ObfuscationScheme::EA_simple: return "EA_simple";
    case ObfuscationScheme::ModEA_simple: return "ModEA_simple";
    case ObfuscationScheme::Admin_simple: return "Admin_simple";
    case ObfuscationScheme::HH_bilinear: return "HH_bilinear";
    case ObfuscationScheme::EA_bilinear: return "EA_bilinear";
    case ObfuscationScheme::ModEA_bilinear: return "ModEA_bilinear";
    case ObfuscationScheme::Admin_bilinear: return "Admin_bilinear";
    case ObfuscationScheme::EAbuffer_zonal: return "EAbuffer_zonal";
    case ObfuscationScheme::AdminUnit_zonal: return "AdminUnit_zonal";
  }
  return "unknown";
}

int scheme_number(ObfuscationScheme scheme) { return static_cast<int>(scheme) + 1; }

ObfuscationScheme parse_scheme(std::string_view text) {
  text = trim(text);
  for (auto s : kAllSchemes) {
    if (scheme_name(s) == text || std::to_string(scheme_number(s)) == text) return s;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown scheme '" + std::string(text) + "'");
}

GeoPoint ea_centerpoint(const std::vector<GeoPoint>& points) {
  if (points.empty()) throw Error(ErrorCode::EmptyEA, "EA has no member households");
  double lon = 0.0, lat = 0.0;
  for (const auto& p : points) {
    lon += p.lon;
    lat += p.lat;
  }
  const auto n = static_cast<double>(points.size());
  return {lon / n, lat / n};
}

GeoPoint obfuscate_ea(const GeoPoint& point, bool urban, std::uint64_t seed, const OffsetRadii& radii) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double max_km = urban ? radii.urban_km : radii.rural_km;
  if (!urban && unit(rng) < radii.rural_far_probability) max_km = radii.rural_far_km;
  const double bearing = 2.0 * std::numbers::pi * unit(rng);
  const double distance = max_km * unit(rng);
  return destination(point, bearing, distance);
}

GeoContext build_geo_context(const std::vector<HouseholdGeo>& households,
                             std::map<std::string, AdminUnit> admins, double ea_buffer_km,
                             std::uint64_t offset_seed, const OffsetRadii& radii) {
  GeoContext ctx;
  ctx.admins = std::move(admins);
  std::map<std::string, std::vector<GeoPoint>> members;
  std::map<std::string, int> urban_votes;
  for (const auto& hh : households) {
    if (!ctx.admins.contains(hh.admin_id))
      throw Error(ErrorCode::MissingContext, "household " + hh.hh_id + " references unknown admin " +
                                                 hh.admin_id);
    if (!ctx.households.emplace(hh.hh_id, hh).second)
      throw Error(ErrorCode::DuplicateKey, "household " + hh.hh_id + " listed twice");
    auto& ea = ctx.eas[hh.ea_id];
    ea.members.push_back(hh.hh_id);
    members[hh.ea_id].push_back(hh.location);
    urban_votes[hh.ea_id] += hh.urban ? 1 : -1;
  }
  for (auto& [ea_id, ea] : ctx.eas) {
    ea.centerpoint = ea_centerpoint(members[ea_id]);
    ea.urban = urban_votes[ea_id] > 0;
    ea.buffer_km = ea_buffer_km;
    ea.modified = obfuscate_ea(ea.centerpoint, ea.urban, derive_seed(offset_seed, ea_id), radii);
  }
  return ctx;
}

GeoContext load_geo_context(const std::filesystem::path& households_csv,
                            const std::filesystem::path& admin_csv, double ea_buffer_km,
                            std::uint64_t offset_seed, const OffsetRadii& radii) {
  const auto admin_table = read_csv(admin_csv);
  std::map<std::string, AdminUnit> admins;
  {
    const auto id = admin_table.column("admin_id"), w = admin_table.column("west"),
               s = admin_table.column("south"), e = admin_table.column("east"),
               n = admin_table.column("north"), clon = admin_table.column("centroid_lon"),
               clat = admin_table.column("centroid_lat");
    for (const auto& row : admin_table.rows) {
      AdminUnit unit{{parse_double(row[w]), parse_double(row[s]), parse_double(row[e]), parse_double(row[n])},
                     {parse_double(row[clon]), parse_double(row[clat])}};
      if (!(unit.bounds.east > unit.bounds.west) || !(unit.bounds.north > unit.bounds.south))
        throw Error(ErrorCode::SchemaMismatch, "admin " + row[id] + " has an empty rectangle");
      if (!admins.emplace(row[id], unit).second)
        throw Error(ErrorCode::DuplicateKey, "admin " + row[id] + " listed twice");
    }
  }
  const auto hh_table = read_csv(households_csv);
  const auto hh = hh_table.column("hh_id"), ea = hh_table.column("ea_id"),
             admin = hh_table.column("admin_id"), lon = hh_table.column("lon"),
             lat = hh_table.column("lat"), urban = hh_table.column("urban");
  std::vector<HouseholdGeo> households;
  households.reserve(hh_table.rows.size());
  for (const auto& row : hh_table.rows) {
    households.push_back({row[hh], row[ea], row[admin], {parse_double(row[lon]), parse_double(row[lat])},
                          parse_int(row[urban]) != 0});
  }
  return build_geo_context(households, std::move(admins), ea_buffer_km, offset_seed, radii);
}

void save_geo_context(const GeoContext& ctx, const std::filesystem::path& households_csv,
                      const std::filesystem::path& admin_csv) {
  {
    AtomicWriter w(households_csv);
    w.stream() << "hh_id,ea_id,admin_id,lon,lat,urban\n";
    for (const auto& [id, h] : ctx.households)
      w.stream() << id << ',' << h.ea_id << ',' << h.admin_id << ',' << format_double(h.location.lon)
                 << ',' << format_double(h.location.lat) << ',' << (h.urban ? 1 : 0) << '\n';
    w.commit();
  }
  AtomicWriter w(admin_csv);
  w.stream() << "admin_id,west,south,east,north,centroid_lon,centroid_lat\n";
  for (const auto& [id, a] : ctx.admins)
    w.stream() << id << ',' << format_double(a.bounds.west) << ',' << format_double(a.bounds.south)
               << ',' << format_double(a.bounds.east) << ',' << format_double(a.bounds.north) << ','
               << format_double(a.centroid.lon) << ',' << format_double(a.centroid.lat) << '\n';
  w.commit();
}

FeatureRef resolve_feature(ObfuscationScheme scheme, const std::string& hh_id, const GeoContext& ctx) {
  const auto hh_it = ctx.households.find(hh_id);
  if (hh_it == ctx.households.end()) throw Error(ErrorCode::UnknownHousehold, hh_id);
  const auto& hh = hh_it->second;

  auto ea = [&]() -> const EaGeo& {
    const auto it = ctx.eas.find(hh.ea_id);
    if (it == ctx.eas.end()) throw Error(ErrorCode::MissingContext, "EA " + hh.ea_id);
    return it->second;
  };
  auto admin = [&]() -> const AdminUnit& {
    const auto it = ctx.admins.find(hh.admin_id);
    if (it == ctx.admins.end()) throw Error(ErrorCode::MissingContext, "admin " + hh.admin_id);
    return it->second;
  };

  using S = ObfuscationScheme;
  using M = ExtractionMethod;
  switch (scheme) {
    case S::HH_simple: return PointFeature{hh.location, M::Simple};
    case S::EA_simple: return PointFeature{ea().centerpoint, M::Simple};
    case S::ModEA_simple: return PointFeature{ea().modified, M::Simple};
    case S::Admin_simple: return PointFeature{admin().centroid, M::Simple};
    case S::HH_bilinear: return PointFeature{hh.location, M::Bilinear};
    case S::EA_bilinear: return PointFeature{ea().centerpoint, M::Bilinear};
    case S::ModEA_bilinear: return PointFeature{ea().modified, M::Bilinear};
    case S::Admin_bilinear: return PointFeature{admin().centroid, M::Bilinear};
    case S::EAbuffer_zonal: return ZonePolygon{Circle{ea().modified, ea().buffer_km}};
    case S::AdminUnit_zonal: return ZonePolygon{admin().bounds};
  }
  throw Error(ErrorCode::MissingContext, "unhandled scheme");
}

// ---------------------------------------------------------------------------

namespace {

DailySeries make_series(const RasterStack& stack, const DateRange& dates) {
  if (dates.n_days == 0) throw Error(ErrorCode::DateOutOfRange, "empty date range");
  day_index(stack, dates.first);
  day_index(stack, dates.end() - std::chrono::days{1});
  DailySeries out;
  out.start_date = dates.first;
  out.values.resize(dates.n_days);
  out.variable_kind = stack.variable_kind;
  out.product_id = stack.product_id;
  return out;
}

struct AxisWeights {
  std::uint32_t lo = 0, hi = 0;
  double frac = 0.0;  // weight of `hi`
};

// Position relative to cell centers along one axis; clamps to the edge
// cell within half a cell of the outer boundary.
AxisWeights axis_weights(double pos_cells, std::uint32_t n) {
  const double f = pos_cells - 0.5;
  const double base = std::floor(f);
  if (base < 0.0) return {0, 0, 0.0};
  if (base >= static_cast<double>(n) - 1.0) return {n - 1, n - 1, 0.0};
  const auto lo = static_cast<std::uint32_t>(base);
  return {lo, lo + 1, f - base};
}

}  // namespace

DailySeries extract_simple(const RasterStack& stack, const GeoPoint& point, const DateRange& dates) {
  const auto cell = cell_of(stack, point);
  auto out = make_series(stack, dates);
  const std::size_t first = day_index(stack, dates.first);
  for (std::size_t d = 0; d < dates.n_days; ++d) out.values[d] = stack.at(first + d, cell.row, cell.col);
  return out;
}

DailySeries extract_bilinear(const RasterStack& stack, const GeoPoint& point, const DateRange& dates) {
  if (!stack.contains(point))
    throw Error(ErrorCode::OutOfDomain, "point (" + std::to_string(point.lon) + ", " +
                                            std::to_string(point.lat) + ") outside grid");
  const auto cx = axis_weights((point.lon - stack.origin_lon) / stack.cell_size_lon, stack.n_cols);
  const auto ry = axis_weights((stack.origin_lat - point.lat) / stack.cell_size_lat, stack.n_rows);
  struct Tap {
    std::uint32_t row, col;
    double w;
  };
  std::array<Tap, 4> taps{{{ry.lo, cx.lo, (1.0 - ry.frac) * (1.0 - cx.frac)},
                           {ry.lo, cx.hi, (1.0 - ry.frac) * cx.frac},
                           {ry.hi, cx.lo, ry.frac * (1.0 - cx.frac)},
                           {ry.hi, cx.hi, ry.frac * cx.frac}}};
  auto out = make_series(stack, dates);
  const std::size_t first = day_index(stack, dates.first);
  for (std::size_t d = 0; d < dates.n_days; ++d) {
    double acc = 0.0;
    for (const auto& t : taps)
      if (t.w != 0.0) acc += t.w * static_cast<double>(stack.at(first + d, t.row, t.col));
    out.values[d] = acc;
  }
  return out;
}

DailySeries extract_zonal(const RasterStack& stack, const ZonePolygon& zone, const DateRange& dates) {
  // candidate window of rows/cols, then exact center-in-polygon test
  double west, east, south, north;
  if (const auto* c = std::get_if<Circle>(&zone)) {
    if (!(c->radius_km > 0.0)) throw Error(ErrorCode::EmptyZone, "circle radius must be positive");
    const double dlat = rad2deg(c->radius_km / kEarthRadiusKm) * 1.01;
    const double max_abs_lat = std::min(89.999, std::abs(c->center.lat) + dlat);
    const double dlon = std::min(360.0, dlat / std::cos(deg2rad(max_abs_lat)));
    west = c->center.lon - dlon;
    east = c->center.lon + dlon;
    south = c->center.lat - dlat;
    north = c->center.lat + dlat;
  } else {
    const auto& r = std::get<Rectangle>(zone);
    if (!(r.east > r.west) || !(r.north > r.south))
      throw Error(ErrorCode::EmptyZone, "rectangle must have east > west and north > south");
    west = r.west;
    east = r.east;
    south = r.south;
    north = r.north;
  }
  auto clamp_index = [](double v, std::uint32_t n) {
    return static_cast<std::uint32_t>(std::clamp(v, 0.0, static_cast<double>(n - 1)));
  };
  const auto c0 = clamp_index(std::floor((west - stack.origin_lon) / stack.cell_size_lon) - 1, stack.n_cols);
  const auto c1 = clamp_index(std::ceil((east - stack.origin_lon) / stack.cell_size_lon) + 1, stack.n_cols);
  const auto r0 = clamp_index(std::floor((stack.origin_lat - north) / stack.cell_size_lat) - 1, stack.n_rows);
  const auto r1 = clamp_index(std::ceil((stack.origin_lat - south) / stack.cell_size_lat) + 1, stack.n_rows);

  std::vector<std::size_t> cells;
  for (std::uint32_t r = r0; r <= r1; ++r)
    for (std::uint32_t c = c0; c <= c1; ++c)
      if (contains(zone, {stack.center_lon(c), stack.center_lat(r)})) cells.push_back(std::size_t{r} * stack.n_cols + c);
  if (cells.empty()) throw Error(ErrorCode::EmptyZone, "no cell center inside the zone");

  auto out = make_series(stack, dates);
  const std::size_t first = day_index(stack, dates.first);
  const auto n = static_cast<double>(cells.size());
  for (std::size_t d = 0; d < dates.n_days; ++d) {
    const float* day = &stack.values[(first + d) * stack.cells_per_day()];
    double acc = 0.0;
    for (auto i : cells) acc += static_cast<double>(day[i]);
    out.values[d] = acc / n;
  }
  return out;
}

DailySeries extract(const RasterStack& stack, const FeatureRef& feature, const DateRange& dates) {
  if (const auto* p = std::get_if<PointFeature>(&feature)) {
    switch (p->method) {
      case ExtractionMethod::Simple: return extract_simple(stack, p->point, dates);
      case ExtractionMethod::Bilinear: return extract_bilinear(stack, p->point, dates);
      case ExtractionMethod::Zonal: break;
    }
    throw Error(ErrorCode::MissingContext, "point feature with zonal method");
  }
  return extract_zonal(stack, std::get<ZonePolygon>(feature), dates);
}

}  // namespace agw
