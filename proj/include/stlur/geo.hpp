#pragma once

namespace stlur {

/// WGS84 degrees.
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

/// Kilometres east/north of a projection origin.
struct PlanarPoint {
  double east_km = 0.0;
  double north_km = 0.0;
};

inline constexpr double kKmPerDegreeLon = 111.320;
inline constexpr double kKmPerDegreeLat = 110.574;

/// Local equirectangular projection around `origin`. Valid within about a
/// degree of the origin.
PlanarPoint project(GeoPoint p, GeoPoint origin);
GeoPoint unproject(PlanarPoint p, GeoPoint origin);

double planar_distance_km(PlanarPoint a, PlanarPoint b);
double haversine_km(GeoPoint a, GeoPoint b);

}  // namespace stlur
