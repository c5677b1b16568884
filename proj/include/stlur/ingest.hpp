#pragma once

#include "stlur/geo.hpp"
#include "stlur/timeutil.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace stlur {

inline constexpr std::size_t kCovariateCount = 28;
using CovariateVector = std::array<double, kCovariateCount>;

struct RawSample {
  std::string car_id;
  Timestamp time = 0;
  GeoPoint position;
  double no2_ppb = 0.0;
};

struct Segment {
  std::int64_t id = 0;
  GeoPoint center;
  PlanarPoint planar;
  CovariateVector covariates{};
};

/// One segment-snapped log-concentration value.
struct Observation {
  std::string car_id;
  Timestamp time = 0;
  std::int64_t segment_id = 0;
  PlanarPoint planar;
  double y = 0.0;
  int block_seconds = 1;
};

struct Centerline {
  std::int64_t way_id = 0;
  std::vector<GeoPoint> vertices;
};

/// Places one segment per `interval_m` of arc length along each polyline,
/// centred in its piece; the last piece may be shorter. Ids run from 1 in
/// input order.
std::vector<Segment> segmentize_centerlines(std::span<const Centerline> centerlines, double interval_m);

struct SnapOptions {
  double max_snap_km = 0.1;
  /// Concentrations are clamped to at least this many ppb before the log.
  double floor_ppb = 0.1;
};

struct SnapReport {
  std::vector<Observation> observations;
  std::size_t dropped = 0;
  std::size_t floored = 0;
};

/// Nearest-segment assignment by planar distance; ties (within 1e-12 km) go
/// to the smaller id. Output is ordered by (car, time).
SnapReport snap_to_segments(std::span<const RawSample> samples, std::span<const Segment> segments,
                            GeoPoint origin, const SnapOptions& options = {});

/// Index of the nearest segment by exhaustive scan, same tie rule as
/// snap_to_segments.
std::size_t nearest_segment_brute_force(PlanarPoint p, std::span<const Segment> segments);

/// Per-car medians over wall-clock aligned blocks. Input must be sorted by
/// (car, time). Output time is the block start plus half the block length
/// (rounded down to whole seconds).
std::vector<Observation> block_median(std::span<const Observation> obs, int block_seconds);

/// Median with the midpoint convention for even counts. Reorders `values`.
double median_inplace(std::vector<double>& values);

/// Mean of segment centres, used as the projection origin.
GeoPoint segment_centroid(std::span<const Segment> segments);

/// Recomputes every segment's planar position relative to `origin`.
void assign_planar(std::span<Segment> segments, GeoPoint origin);

void sort_observations(std::vector<Observation>& obs);

// File formats.
std::vector<RawSample> read_samples(const std::string& path);
void write_samples(const std::string& path, std::span<const RawSample> samples);
std::vector<Centerline> read_centerlines(const std::string& path);
void write_centerlines(const std::string& path, std::span<const Centerline> centerlines);
/// Planar coordinates are left at zero; call assign_planar afterwards.
std::vector<Segment> read_segments(const std::string& path);
void write_segments(const std::string& path, std::span<const Segment> segments);
std::vector<Observation> read_observations(const std::string& path);
void write_observations(const std::string& path, std::span<const Observation> obs);

/// Covariate points (`lat,lon,c01..c28`) joined onto segments by nearest
/// point. Stands in for the GIS extraction step.
struct CovariatePoint {
  GeoPoint position;
  CovariateVector covariates{};
};
std::vector<CovariatePoint> read_covariate_points(const std::string& path);
void write_covariate_points(const std::string& path, std::span<const CovariatePoint> points);
void attach_covariates(std::span<Segment> segments, std::span<const CovariatePoint> points, GeoPoint origin);

std::string covariate_column_name(std::size_t index);

}  // namespace stlur
