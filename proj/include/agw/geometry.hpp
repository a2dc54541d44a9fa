#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace agw {

inline constexpr double kEarthRadiusKm = 6371.0;

struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline bool is_valid(const GeoPoint& p) {
  return p.lon >= -180.0 && p.lon <= 180.0 && p.lat >= -90.0 && p.lat <= 90.0;
}

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Great-circle distance on a 6371 km sphere.
inline double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dphi = phi2 - phi1;
  const double dlambda = deg2rad(b.lon - a.lon);
  const double s = std::sin(dphi / 2.0);
  const double t = std::sin(dlambda / 2.0);
  const double h = s * s + std::cos(phi1) * std::cos(phi2) * t * t;
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(std::min(1.0, h)));
}

/// Point reached travelling `distance_km` from `origin` along initial bearing
/// `bearing_rad` (clockwise from north).
inline GeoPoint destination(const GeoPoint& origin, double bearing_rad, double distance_km) {
  if (distance_km == 0.0) return origin;
  const double delta = distance_km / kEarthRadiusKm;
  const double phi1 = deg2rad(origin.lat);
  const double lambda1 = deg2rad(origin.lon);
  const double sin_phi2 =
      std::sin(phi1) * std::cos(delta) + std::cos(phi1) * std::sin(delta) * std::cos(bearing_rad);
  const double phi2 = std::asin(sin_phi2);
  const double lambda2 =
      lambda1 + std::atan2(std::sin(bearing_rad) * std::sin(delta) * std::cos(phi1),
                           std::cos(delta) - std::sin(phi1) * sin_phi2);
  double lon = rad2deg(lambda2);
  if (lon > 180.0) lon -= 360.0;
  if (lon < -180.0) lon += 360.0;
  return {lon, rad2deg(phi2)};
}

}  // namespace agw
