#pragma once

#include "stlur/covariance.hpp"
#include "stlur/features.hpp"
#include "stlur/ingest.hpp"
#include "stlur/vecchia.hpp"

#include <json.hpp>

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace stlur {

inline constexpr int kModelSchemaVersion = 1;

/// Everything needed to reproduce predictions from a two-step fit.
struct FittedModel {
  CovKind kind = CovKind::ST;
  Vec beta;
  CovParams params;
  ConditioningScheme scheme;
  Standardization standardization;
  PcaBasis basis;
  GeoPoint origin;
  Timestamp train_start = 0;
  Timestamp train_end = 0;
  int block_seconds = 1;
  double utc_offset_hours = -8.0;
  std::size_t n_train = 0;
  double objective = 0.0;
  bool converged = false;
  std::vector<double> pc_t_stats;

  Featurizer featurizer() const { return Featurizer(standardization, basis, utc_offset_hours); }
};

nlohmann::json model_to_json(const FittedModel& model);
FittedModel model_from_json(const nlohmann::json& j);
std::string model_to_string(const FittedModel& model);
void save_model(const std::string& path, const FittedModel& model);
/// Throws "model not found" when the file is missing.
FittedModel load_model(const std::string& path);

/// Segments keyed by id, with planar positions relative to one origin.
class SegmentTable {
 public:
  SegmentTable(std::vector<Segment> segments, GeoPoint origin);
  /// Uses the centroid of the segments as origin.
  explicit SegmentTable(std::vector<Segment> segments);

  const Segment& at(std::int64_t id) const;
  bool contains(std::int64_t id) const { return index_.count(id) != 0; }
  std::span<const Segment> all() const { return segments_; }
  GeoPoint origin() const { return origin_; }
  std::size_t size() const { return segments_.size(); }

 private:
  std::vector<Segment> segments_;
  std::unordered_map<std::int64_t, std::size_t> index_;
  GeoPoint origin_;
};

/// Design matrix, responses and space-time points for a set of observations.
struct ObservationDesign {
  Mat X;
  Vec y;
  std::vector<SpacetimePoint> points;
};

/// Rows follow the order of `obs`. Observation planar coordinates are used
/// as given; covariates come from the segment table.
ObservationDesign build_observation_design(const Featurizer& featurizer, const SegmentTable& segments,
                                           std::span<const Observation> obs);

/// Point and design row for a segment at a time.
SpacetimePoint make_point(const Featurizer& featurizer, const Segment& segment, Timestamp time);

/// Indices of `obs` sorted by (time, car, segment); the ordering used for
/// residual series.
std::vector<std::size_t> time_order(std::span<const Observation> obs);

}  // namespace stlur
