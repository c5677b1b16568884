#include "stlur/geo.hpp"

#include <cmath>
#include <numbers>

namespace stlur {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kEarthRadiusKm = 6378.137;  // equatorial, matches 111.320 km per degree
}  // namespace

PlanarPoint project(GeoPoint p, GeoPoint origin) {
  return {(p.lon - origin.lon) * kKmPerDegreeLon * std::cos(origin.lat * kDegToRad),
          (p.lat - origin.lat) * kKmPerDegreeLat};
}

GeoPoint unproject(PlanarPoint p, GeoPoint origin) {
  return {origin.lat + p.north_km / kKmPerDegreeLat,
          origin.lon + p.east_km / (kKmPerDegreeLon * std::cos(origin.lat * kDegToRad))};
}

double planar_distance_km(PlanarPoint a, PlanarPoint b) {
  return std::hypot(a.east_km - b.east_km, a.north_km - b.north_km);
}

double haversine_km(GeoPoint a, GeoPoint b) {
  const double dlat = (b.lat - a.lat) * kDegToRad;
  const double dlon = (b.lon - a.lon) * kDegToRad;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * kDegToRad) * std::cos(b.lat * kDegToRad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

}  // namespace stlur
