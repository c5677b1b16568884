#pragma once

#include "stlur/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace stlur {

struct PredictionTarget {
  std::int64_t segment_id = 0;
  Timestamp time = 0;
};

struct PredictionSet {
  std::vector<PredictionTarget> targets;
  std::vector<SpacetimePoint> points;
  Vec trend;       ///< X β
  Vec mean_log;
  Vec var_log;     ///< observation level, includes the nugget
  Vec var_latent;  ///< latent process, excludes the nugget
  bool fallback_xonly = false;
  std::size_t conditioning_size = 0;
  std::size_t clamped = 0;
  std::vector<std::string> warnings;

  std::size_t size() const { return targets.size(); }
  void append(const PredictionSet& other);
};

/// Conditional mean and variance of the latent residual process at
/// `targets` given noisy residuals at `cond`.
struct DenseConditional {
  Vec mean;
  Vec var_latent;
  std::size_t clamped = 0;
  std::size_t clamped_significant = 0;  ///< raw variance below -1e-8
  double jitter = 0.0;
};

DenseConditional krige_dense(const CovParams& params, std::span<const SpacetimePoint> cond, const Vec& cond_resid,
                             std::span<const SpacetimePoint> targets);

struct ForecastOptions {
  double cond_window_minutes = 60.0;
  /// Gap between the end of the conditioning window and the target time;
  /// defaults to the horizon h.
  std::optional<double> offset_minutes;
};

struct Scores {
  double rmspe_ppb = 0.0;
  /// NaN when either side is constant.
  double cor_ppb = 0.0;
  double mspe_log = 0.0;
  std::size_t n = 0;
};

/// Predictions are exponentiated without a variance correction unless
/// `bias_correct` is set, in which case exp(mean + var_log / 2) is used.
Scores score(const PredictionSet& pred, std::span<const Observation> truth, bool bias_correct = false);

/// Kriging with a fitted model over a segment table.
class Predictor {
 public:
  Predictor(FittedModel model, const std::vector<Segment>& segments);

  const FittedModel& model() const { return model_; }
  const SegmentTable& segments() const { return segments_; }
  const Featurizer& featurizer() const { return featurizer_; }

  /// Dense conditional-normal prediction at `targets` given `conditioning`.
  PredictionSet krige(std::span<const Observation> conditioning, std::span<const PredictionTarget> targets) const;

  /// Conditions on the stream inside
  /// [target_time - offset - window, target_time - offset] and predicts every
  /// segment in `target_segments` (all segments when empty) at target_time.
  PredictionSet forecast(std::span<const Observation> stream, Timestamp target_time, double h_minutes,
                         const ForecastOptions& options = {},
                         std::span<const std::int64_t> target_segments = {}) const;

  /// h-ahead forecast of each test observation from the stream window that
  /// precedes it; the cross-validation protocol.
  PredictionSet forecast_observations(std::span<const Observation> stream, std::span<const Observation> tests,
                                      double h_minutes, const ForecastOptions& options = {}) const;

  /// Predicts each car's observations from the other cars' data on the same
  /// day. Days with a single car yield no rows and a warning.
  PredictionSet car_ab_predict(std::span<const Observation> day) const;

  /// Kriging under the spatial covariance from the k nearest archive
  /// observations (planar distance, earlier time first on ties).
  PredictionSet spatial_interpolate(std::span<const Observation> archive, std::span<const PredictionTarget> targets,
                                    std::size_t k = 800) const;

  PredictionTarget target_of(const Observation& obs) const { return {obs.segment_id, obs.time}; }

 private:
  PredictionSet prior_only(std::span<const PredictionTarget> targets) const;
  PredictionSet prepare_targets(std::span<const PredictionTarget> targets) const;

  FittedModel model_;
  SegmentTable segments_;
  Featurizer featurizer_;
};

/// Indices of the k archive points nearest `p`, ordered by (distance, time).
std::vector<std::size_t> nearest_neighbors(std::span<const Observation> archive, PlanarPoint p, std::size_t k);

/// Observations of `stream` (sorted by time) with time in [lo, hi].
std::vector<Observation> time_window(std::span<const Observation> stream_by_time, Timestamp lo, Timestamp hi);

/// Predictions CSV plus nothing else; the sidecar is written by the caller.
void write_predictions(const std::string& path, const PredictionSet& pred);

}  // namespace stlur
