#pragma once

#include "stlur/kriging.hpp"
#include "stlur/model.hpp"
#include "stlur/optimizer.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace stlur {

struct OptimizerConfig {
  int max_iters = 500;
  double rel_tol = 1e-6;
  int restarts = 3;
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const;
};

struct OlsFit {
  Vec beta;
  Vec residuals;
};

/// Least squares by column-pivoted QR. Rank-deficient designs are rejected
/// with the offending columns named.
OlsFit ols_beta(const Mat& X, const Vec& y);

struct ThetaFit {
  CovParams params;
  double objective = 0.0;  ///< composite log-likelihood at params
  bool converged = false;
  int starts_converged = 0;
  int iterations = 0;
  int evaluations = 0;
  /// Best negative log-likelihood after each simplex iteration of the
  /// winning start.
  std::vector<double> trace;
};

class ThetaFitError : public Error {
 public:
  ThetaFitError(const std::string& message, ThetaFit best) : Error(message), best_(std::move(best)) {}
  const ThetaFit& best() const { return best_; }

 private:
  ThetaFit best_;
};

/// Maximizes the composite likelihood over log-transformed variances and
/// ranges. Start 0 uses σ² = τ² = half the residual variance and unit
/// ranges; later starts rescale each of those by 0.3 or 3 (seeded).
ThetaFit fit_theta(const ResidualSeries& series, CovKind kind, const ConditioningScheme& scheme,
                   const OptimizerConfig& config);

/// Parameters actually optimized for a kind, in log space.
Vec theta_to_log(const CovParams& params);
CovParams theta_from_log(CovKind kind, const Vec& log_params);

struct FeatureConfig {
  int k_computed = 13;
  int k_retained = 7;
  double utc_offset_hours = -8.0;
};

/// Standardization and PCA fitted on the distinct segments visited by `obs`.
Featurizer fit_features(std::span<const Observation> obs, const SegmentTable& segments, const FeatureConfig& config,
                        std::vector<double>* t_stats = nullptr);

/// Residual series (time ordered) from observations and a design.
ResidualSeries residual_series(std::span<const Observation> obs, const ObservationDesign& design, const Vec& beta);

/// OLS for β, then composite-likelihood Θ, with a frozen feature transform.
FittedModel fit_with_features(std::span<const Observation> obs, const SegmentTable& segments,
                              const Featurizer& featurizer, CovKind kind, const ConditioningScheme& scheme,
                              const OptimizerConfig& config);

/// Full two-step fit: features, OLS, then Θ.
FittedModel two_step_fit(std::span<const Observation> obs, const SegmentTable& segments, CovKind kind,
                         const ConditioningScheme& scheme, const FeatureConfig& features,
                         const OptimizerConfig& config);

struct WindowResult {
  Timestamp week_start = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::optional<FittedModel> model;
  double mspe_log = std::numeric_limits<double>::quiet_NaN();
  std::string warning;
};

struct SlidingWindowConfig {
  int window_weeks = 6;
  double horizon_minutes = 15.0;
  ForecastOptions forecast;
  /// Weeks are counted from local midnight of this day; defaults to the
  /// first observation's day.
  std::optional<Timestamp> origin;
};

/// For every week with w prior weeks available, train on those weeks and
/// score h-ahead forecasts on the week (log-scale MSPE).
std::vector<WindowResult> sliding_window_fit(std::span<const Observation> obs, const std::vector<Segment>& segments,
                                             CovKind kind, const ConditioningScheme& scheme,
                                             const FeatureConfig& features, const OptimizerConfig& config,
                                             const SlidingWindowConfig& window);

/// Rebuilds a data set from whole days: the k-th draw is moved onto the k-th
/// distinct day of `obs` so clock times are preserved.
std::vector<Observation> resample_days(std::span<const Observation> obs, std::span<const std::size_t> draws,
                                       double utc_offset_hours);

/// Distinct local days present in `obs`, ascending.
std::vector<std::int64_t> distinct_days(std::span<const Observation> obs, double utc_offset_hours);

struct BootstrapConfig {
  int window_weeks = 21;
  int reps = 15;
  std::uint64_t seed = 0;
};

/// Day-resampling bootstrap of Θ over the last `window_weeks` weeks of data.
std::vector<CovParams> bootstrap_theta(std::span<const Observation> obs, const SegmentTable& segments, CovKind kind,
                                       const ConditioningScheme& scheme, const FeatureConfig& features,
                                       const OptimizerConfig& config, const BootstrapConfig& bootstrap);

}  // namespace stlur
