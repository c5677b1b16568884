#pragma once

#include "stlur/covariance.hpp"
#include "stlur/ingest.hpp"
#include "stlur/rng.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace stlur {

/// Square street grid centred on the planar origin.
struct GridSpec {
  double extent_km = 6.0;
  double spacing_km = 0.5;

  int lines() const;
};

struct RoutePoint {
  PlanarPoint planar;
  double time_h = 0.0;
};

/// Constant-speed random walk along grid streets, no U-turns except at the
/// boundary. Starts at a random intersection.
std::vector<RoutePoint> grid_random_walk(Rng& rng, const GridSpec& grid, double speed_kmh, double start_h,
                                         double duration_h, double step_seconds);

/// Exact draw via dense Cholesky.
Vec simulate_dense(const CovParams& params, std::span<const SpacetimePoint> points, Rng& rng, bool with_nugget);

/// Sequential draw where each point conditions on the `neighbors` points
/// immediately before it (points must be in time order).
Vec simulate_sequential(const CovParams& params, std::span<const SpacetimePoint> points, std::size_t neighbors, Rng& rng,
                        bool with_nugget);

struct SynthConfig {
  GeoPoint origin{37.80, -122.27};
  GridSpec grid;
  int covariate_grid = 31;
  int cars = 2;
  int days = 5;
  /// Local midnight of the first day.
  Timestamp first_day = 1465200000;  // 2016-06-06T00:00:00-08:00
  double utc_offset_hours = -8.0;
  double drive_start_h = 12.0;
  double drive_end_h = 17.0;
  double sample_seconds = 1.0;
  double speed_kmh = 25.0;
  double gps_noise_m = 3.0;
  double glitch_rate = 0.001;
  double base_ppb = 15.0;
  CovParams truth{CovKind::STX, 0.3, 0.1, 1.0, 1.5, 3.0};
  std::size_t sim_neighbors = 25;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthData {
  std::vector<Centerline> centerlines;
  std::vector<CovariatePoint> covariate_points;
  std::vector<RawSample> samples;
};

/// Smooth latent surfaces behind the synthetic covariates, evaluated at a
/// planar point.
std::vector<double> synth_latent_fields(PlanarPoint p, std::uint64_t seed);

SynthData generate_synthetic(const SynthConfig& config);

}  // namespace stlur
