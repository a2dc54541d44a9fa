#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "agw/date.hpp"
#include "agw/geometry.hpp"
#include "agw/raster.hpp"

namespace agw {

struct Circle {
  GeoPoint center;
  double radius_km = 0.0;
  friend bool operator==(const Circle&, const Circle&) = default;
};

struct Rectangle {
  double west = 0.0, south = 0.0, east = 0.0, north = 0.0;
  friend bool operator==(const Rectangle&, const Rectangle&) = default;
};

using ZonePolygon = std::variant<Circle, Rectangle>;

bool contains(const ZonePolygon& zone, const GeoPoint& p);

/// The ten extraction variants: four point targets under the simple and
/// bilinear methods, plus two zonal areas.
enum class ObfuscationScheme : std::uint8_t {
  HH_simple,
  EA_simple,
  ModEA_simple,
  Admin_simple,
  HH_bilinear,
  EA_bilinear,
  ModEA_bilinear,
  Admin_bilinear,
  EAbuffer_zonal,
  AdminUnit_zonal,
};

inline constexpr std::array<ObfuscationScheme, 10> kAllSchemes = {
    ObfuscationScheme::HH_simple,      ObfuscationScheme::EA_simple,
    ObfuscationScheme::ModEA_simple,   ObfuscationScheme::Admin_simple,
    ObfuscationScheme::HH_bilinear,    ObfuscationScheme::EA_bilinear,
    ObfuscationScheme::ModEA_bilinear, ObfuscationScheme::Admin_bilinear,
    ObfuscationScheme::EAbuffer_zonal, ObfuscationScheme::AdminUnit_zonal,
};

/// Default scheme once extraction method has been shown not to matter.
inline constexpr ObfuscationScheme kDefaultScheme = ObfuscationScheme::ModEA_simple;

std::string_view scheme_name(ObfuscationScheme scheme);
/// 1-based position in kAllSchemes ("extraction method N").
int scheme_number(ObfuscationScheme scheme);
/// Accepts either the name or the 1-based number.
ObfuscationScheme parse_scheme(std::string_view text);

enum class ExtractionMethod : std::uint8_t { Simple, Bilinear, Zonal };

struct PointFeature {
  GeoPoint point;
  ExtractionMethod method = ExtractionMethod::Simple;
  friend bool operator==(const PointFeature&, const PointFeature&) = default;
};

using FeatureRef = std::variant<PointFeature, ZonePolygon>;

struct HouseholdGeo {
  std::string hh_id;
  std::string ea_id;
  std::string admin_id;
  GeoPoint location;
  bool urban = false;
};

struct EaGeo {
  std::vector<std::string> members;
  GeoPoint centerpoint;
  GeoPoint modified;  // offset centerpoint, fixed across waves
  double buffer_km = 5.0;
  bool urban = false;
};

struct AdminUnit {
  Rectangle bounds;
  GeoPoint centroid;
};

struct GeoContext {
  std::map<std::string, HouseholdGeo> households;
  std::map<std::string, EaGeo> eas;
  std::map<std::string, AdminUnit> admins;
};

/// Maximum displacement radii for published EA coordinates.
struct OffsetRadii {
  double urban_km = 2.0;
  double rural_km = 5.0;
  double rural_far_km = 10.0;
  double rural_far_probability = 0.01;
};

GeoPoint ea_centerpoint(const std::vector<GeoPoint>& points);

/// Uniform bearing, distance uniform on [0, r_max]. Deterministic per seed.
GeoPoint obfuscate_ea(const GeoPoint& point, bool urban, std::uint64_t seed,
                      const OffsetRadii& radii = {});

/// Derives EA centerpoints and their offsets. The offset for each EA is drawn
/// once from (seed, ea_id). Throws MissingContext for an unknown admin id.
GeoContext build_geo_context(const std::vector<HouseholdGeo>& households,
                             std::map<std::string, AdminUnit> admins, double ea_buffer_km,
                             std::uint64_t offset_seed, const OffsetRadii& radii = {});

/// households.csv: hh_id,ea_id,admin_id,lon,lat,urban
/// admin.csv: admin_id,west,south,east,north,centroid_lon,centroid_lat
GeoContext load_geo_context(const std::filesystem::path& households_csv,
                            const std::filesystem::path& admin_csv, double ea_buffer_km,
                            std::uint64_t offset_seed, const OffsetRadii& radii = {});
void save_geo_context(const GeoContext& ctx, const std::filesystem::path& households_csv,
                      const std::filesystem::path& admin_csv);

FeatureRef resolve_feature(ObfuscationScheme scheme, const std::string& hh_id, const GeoContext& ctx);

struct DateRange {
  Date first{};
  std::size_t n_days = 0;
  Date end() const { return first + std::chrono::days{static_cast<long>(n_days)}; }
};

struct DailySeries {
  Date start_date{};
  std::vector<double> values;  // NaN = missing
  VariableKind variable_kind = VariableKind::Rainfall;
  std::string product_id;
  std::optional<ObfuscationScheme> scheme;
};

DailySeries extract_simple(const RasterStack& stack, const GeoPoint& point, const DateRange& dates);
DailySeries extract_bilinear(const RasterStack& stack, const GeoPoint& point, const DateRange& dates);
DailySeries extract_zonal(const RasterStack& stack, const ZonePolygon& zone, const DateRange& dates);

/// Dispatches on the feature kind.
DailySeries extract(const RasterStack& stack, const FeatureRef& feature, const DateRange& dates);

/// Whole record of the stack.
inline DateRange full_range(const RasterStack& stack) { return {stack.start_date, stack.n_days}; }

}  // namespace agw
