#pragma once

#include "stlur/covariance.hpp"
#include "stlur/ingest.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stlur {

enum class MonitorKind { Mobile, Fixed };
std::string_view to_string(MonitorKind kind);

/// Clock times are local hours of day.
struct DesignWindow {
  double route_start_h = 13.0;
  double route_end_h = 16.0;
  double cond_start_h = 13.0;
  double cond_end_h = 15.5;
  double forecast_h = 16.0;
  double interp_h = 14.25;
  int sampling_seconds = 15;
  double utc_offset_hours = -8.0;

  void validate() const;
};

/// A candidate monitoring or target location with its covariance covariates.
struct DesignSite {
  std::int64_t segment_id = 0;
  PlanarPoint planar;
  std::vector<double> x_cov;
};

/// Draws c service days uniformly with replacement, clips each to the route
/// window, keeps the first observation in every sampling period and overlays
/// the routes on one nominal day (local clock preserved).
std::vector<Observation> sample_routes(std::span<const std::vector<Observation>> archive, int c, std::uint64_t seed,
                                       const DesignWindow& window);

/// m_sites distinct segments, each reporting once per sampling period over
/// the conditioning window on the nominal day.
std::vector<Observation> sample_fixed_sites(std::span<const DesignSite> sites, std::size_t m_sites, std::uint64_t seed,
                                            const DesignWindow& window);

/// Nominal-day timestamp for a local clock time.
Timestamp nominal_time(double local_hour, double utc_offset_hours);

struct MspeResult {
  double mspe = 0.0;
  bool cap_bound = false;
};

/// Average predictive variance of noisy observations at `targets` given the
/// conditioning locations:
///   σ² + τ² − (1/n) Σ_i c_iᵀ (Σ_J + τ² I)⁻¹ c_i.
/// When more than `cap` conditioning points are supplied, targets are
/// grouped spatially and each group conditions on the `cap` points with the
/// largest total covariance to it.
MspeResult expected_mspe(const CovParams& params, std::span<const SpacetimePoint> conditioning,
                         std::span<const SpacetimePoint> targets, std::size_t cap = 2000);

/// Several target sets sharing one conditioning factorization.
std::vector<MspeResult> expected_mspe(const CovParams& params, std::span<const SpacetimePoint> conditioning,
                                      std::span<const std::vector<SpacetimePoint>> target_sets, std::size_t cap = 2000);

struct NetworkExperimentConfig {
  CovParams params;
  int max_count = 10;
  int reps = 30;
  std::size_t n_targets = 2000;
  std::size_t cap = 2000;
  std::uint64_t seed = 0;
  int workers = 1;
  DesignWindow window;
};

struct NetworkRow {
  MonitorKind kind = MonitorKind::Mobile;
  int count = 0;
  int rep = 0;
  double mspe_forecast = 0.0;
  double mspe_interp = 0.0;
  bool cap_bound = false;
};

struct NetworkSummary {
  MonitorKind kind = MonitorKind::Mobile;
  int count = 0;
  double forecast_mean = 0.0, forecast_lo = 0.0, forecast_hi = 0.0;
  double interp_mean = 0.0, interp_lo = 0.0, interp_hi = 0.0;
};

struct NetworkReport {
  std::vector<NetworkRow> rows;
  std::vector<NetworkSummary> summary;
  /// Smallest count reaching 90% of the reduction achieved at max_count
  /// (forecast MSPE).
  int flatten_mobile = 0;
  int flatten_fixed = 0;
  std::size_t cap_bound_rows = 0;
};

/// Mobile routes vs fixed sites for counts 1..max_count, `reps` draws each.
/// Targets are a seeded uniform subsample of `sites`.
NetworkReport compare_networks(std::span<const std::vector<Observation>> archive, std::span<const DesignSite> sites,
                               const NetworkExperimentConfig& config);

/// Linear-interpolated empirical quantile (type 7).
double quantile(std::vector<double> values, double q);

void write_design_rows(const std::string& path, std::span<const NetworkRow> rows);

}  // namespace stlur
