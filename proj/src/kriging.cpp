#include "stlur/kriging.hpp"

#include "stlur/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace stlur {

namespace {

constexpr double kNegativeVarianceWarning = -1e-8;

std::vector<Observation> sorted_by_time(std::span<const Observation> obs) {
  std::vector<Observation> out;
  out.reserve(obs.size());
  for (std::size_t i : time_order(obs)) out.push_back(obs[i]);
  return out;
}

}  // namespace

void PredictionSet::append(const PredictionSet& other) {
  const auto n0 = static_cast<Eigen::Index>(size());
  const auto n1 = static_cast<Eigen::Index>(other.size());
  targets.insert(targets.end(), other.targets.begin(), other.targets.end());
  points.insert(points.end(), other.points.begin(), other.points.end());
  auto grow = [&](Vec& dst, const Vec& src) {
    dst.conservativeResize(n0 + n1);
    dst.tail(n1) = src;
  };
  grow(trend, other.trend);
  grow(mean_log, other.mean_log);
  grow(var_log, other.var_log);
  grow(var_latent, other.var_latent);
  fallback_xonly = fallback_xonly || other.fallback_xonly;
  conditioning_size = std::max(conditioning_size, other.conditioning_size);
  clamped += other.clamped;
  warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
}

DenseConditional krige_dense(const CovParams& params, std::span<const SpacetimePoint> cond, const Vec& cond_resid,
                             std::span<const SpacetimePoint> targets) {
  params.validate();
  if (static_cast<Eigen::Index>(cond.size()) != cond_resid.size()) throw Error("conditioning residuals misaligned");
  const auto nt = static_cast<Eigen::Index>(targets.size());
  DenseConditional out;
  out.mean = Vec::Zero(nt);
  out.var_latent.resize(nt);
  for (Eigen::Index t = 0; t < nt; ++t) out.var_latent[t] = cov(params, targets[static_cast<std::size_t>(t)], targets[static_cast<std::size_t>(t)]);
  if (cond.empty() || nt == 0) return out;

  const JitteredCholesky chol(cov_matrix(params, cond, true));
  out.jitter = chol.jitter();
  Mat cross(static_cast<Eigen::Index>(cond.size()), nt);
  for (Eigen::Index t = 0; t < nt; ++t) cross.col(t) = cross_cov(params, targets[static_cast<std::size_t>(t)], cond);
  const Mat w = chol.half_solve(cross);
  const Vec z = chol.half_solve(cond_resid);
  out.mean = w.transpose() * z;
  for (Eigen::Index t = 0; t < nt; ++t) {
    double v = out.var_latent[t] - w.col(t).squaredNorm();
    if (v < 0.0) {
      ++out.clamped;
      if (v < kNegativeVarianceWarning) ++out.clamped_significant;
      v = 0.0;
    }
    out.var_latent[t] = v;
  }
  return out;
}

Scores score(const PredictionSet& pred, std::span<const Observation> truth, bool bias_correct) {
  std::map<std::pair<std::int64_t, Timestamp>, double> observed;
  for (const auto& o : truth) observed.emplace(std::make_pair(o.segment_id, o.time), o.y);
  std::vector<double> p_ppb, o_ppb, err_log;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto it = observed.find({pred.targets[i].segment_id, pred.targets[i].time});
    if (it == observed.end()) continue;
    const auto k = static_cast<Eigen::Index>(i);
    const double m = bias_correct ? pred.mean_log[k] + 0.5 * pred.var_log[k] : pred.mean_log[k];
    p_ppb.push_back(std::exp(m));
    o_ppb.push_back(std::exp(it->second));
    err_log.push_back(pred.mean_log[k] - it->second);
  }
  if (p_ppb.empty()) throw Error("predictions and truth do not overlap");
  const auto n = static_cast<double>(p_ppb.size());
  Scores s;
  s.n = p_ppb.size();
  double se = 0.0, se_log = 0.0, mp = 0.0, mo = 0.0;
  for (std::size_t i = 0; i < p_ppb.size(); ++i) {
    se += (p_ppb[i] - o_ppb[i]) * (p_ppb[i] - o_ppb[i]);
    se_log += err_log[i] * err_log[i];
    mp += p_ppb[i];
    mo += o_ppb[i];
  }
  mp /= n;
  mo /= n;
  double spp = 0.0, soo = 0.0, spo = 0.0;
  for (std::size_t i = 0; i < p_ppb.size(); ++i) {
    spp += (p_ppb[i] - mp) * (p_ppb[i] - mp);
    soo += (o_ppb[i] - mo) * (o_ppb[i] - mo);
    spo += (p_ppb[i] - mp) * (o_ppb[i] - mo);
  }
  s.rmspe_ppb = std::sqrt(se / n);
  s.mspe_log = se_log / n;
  // Exact constancy check: the rounded mean of equal values need not equal them.
  auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  s.cor_ppb = (constant(p_ppb) || constant(o_ppb) || spp <= 0.0 || soo <= 0.0) ? std::numeric_limits<double>::quiet_NaN()
                                                                               : spo / std::sqrt(spp * soo);
  return s;
}

Predictor::Predictor(FittedModel model, const std::vector<Segment>& segments)
    : model_(std::move(model)), segments_(segments, model_.origin), featurizer_(model_.featurizer()) {
  if (model_.beta.size() != featurizer_.design_size()) throw Error("model beta does not match its design");
}

PredictionSet Predictor::prepare_targets(std::span<const PredictionTarget> targets) const {
  PredictionSet set;
  set.targets.assign(targets.begin(), targets.end());
  const auto n = static_cast<Eigen::Index>(targets.size());
  set.trend.resize(n);
  set.points.reserve(targets.size());
  std::unordered_map<std::int64_t, std::vector<double>> cache;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = targets[static_cast<std::size_t>(i)];
    const Segment& seg = segments_.at(t.segment_id);
    auto it = cache.find(t.segment_id);
    if (it == cache.end()) it = cache.emplace(t.segment_id, featurizer_.scores(seg)).first;
    const DesignRow row = build_design_row(it->second, local_hour_of_day(t.time, featurizer_.utc_offset_hours()));
    set.trend[i] = row.x_mean.dot(model_.beta);
    set.points.push_back({seg.planar, to_hours(t.time), it->second});
  }
  return set;
}

PredictionSet Predictor::prior_only(std::span<const PredictionTarget> targets) const {
  PredictionSet set = prepare_targets(targets);
  const auto n = static_cast<Eigen::Index>(targets.size());
  set.mean_log = set.trend;
  set.var_latent.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    set.var_latent[i] = model_.kind == CovKind::XOnly ? 0.0 : cov(model_.params, set.points[static_cast<std::size_t>(i)], set.points[static_cast<std::size_t>(i)]);
  }
  set.var_log = set.var_latent.array() + model_.params.tau2;
  return set;
}

PredictionSet Predictor::krige(std::span<const Observation> conditioning,
                               std::span<const PredictionTarget> targets) const {
  if (model_.kind == CovKind::XOnly) return prior_only(targets);
  if (conditioning.empty()) throw Error("kriging needs at least one conditioning observation");
  PredictionSet set = prepare_targets(targets);
  const ObservationDesign design = build_observation_design(featurizer_, segments_, conditioning);
  const Vec resid = design.y - design.X * model_.beta;
  const DenseConditional dc = krige_dense(model_.params, design.points, resid, set.points);
  set.mean_log = set.trend + dc.mean;
  set.var_latent = dc.var_latent;
  set.var_log = set.var_latent.array() + model_.params.tau2;
  set.conditioning_size = conditioning.size();
  set.clamped = dc.clamped;
  if (dc.clamped_significant > 0) {
    set.warnings.push_back(std::to_string(dc.clamped_significant) + " latent variances below -1e-8 clamped to 0");
  }
  return set;
}

std::vector<Observation> time_window(std::span<const Observation> stream_by_time, Timestamp lo, Timestamp hi) {
  auto first = std::lower_bound(stream_by_time.begin(), stream_by_time.end(), lo,
                                [](const Observation& o, Timestamp t) { return o.time < t; });
  auto last = std::upper_bound(first, stream_by_time.end(), hi,
                               [](Timestamp t, const Observation& o) { return t < o.time; });
  return {first, last};
}

PredictionSet Predictor::forecast(std::span<const Observation> stream, Timestamp target_time, double h_minutes,
                                  const ForecastOptions& options,
                                  std::span<const std::int64_t> target_segments) const {
  const double offset = options.offset_minutes.value_or(h_minutes);
  const auto hi = target_time - static_cast<Timestamp>(std::llround(offset * 60.0));
  const auto lo = hi - static_cast<Timestamp>(std::llround(options.cond_window_minutes * 60.0));
  const auto sorted = sorted_by_time(stream);
  const auto window = time_window(sorted, lo, hi);

  std::vector<PredictionTarget> targets;
  if (target_segments.empty()) {
    for (const auto& s : segments_.all()) targets.push_back({s.id, target_time});
  } else {
    for (auto id : target_segments) targets.push_back({id, target_time});
  }
  if (window.empty() && model_.kind != CovKind::XOnly) {
    PredictionSet set = prior_only(targets);
    set.fallback_xonly = true;
    set.warnings.push_back("empty conditioning window; mean-only forecast");
    return set;
  }
  return krige(window, targets);
}

PredictionSet Predictor::forecast_observations(std::span<const Observation> stream, std::span<const Observation> tests,
                                               double h_minutes, const ForecastOptions& options) const {
  const double offset = options.offset_minutes.value_or(h_minutes);
  const auto offset_s = static_cast<Timestamp>(std::llround(offset * 60.0));
  const auto window_s = static_cast<Timestamp>(std::llround(options.cond_window_minutes * 60.0));
  const auto sorted = sorted_by_time(stream);
  const auto test_sorted = sorted_by_time(tests);

  PredictionSet all;
  all.trend.resize(0);
  all.mean_log.resize(0);
  all.var_log.resize(0);
  all.var_latent.resize(0);
  std::size_t fallbacks = 0;
  std::size_t i = 0;
  while (i < test_sorted.size()) {
    // Tests sharing a timestamp share a conditioning window.
    std::size_t j = i;
    std::vector<PredictionTarget> targets;
    while (j < test_sorted.size() && test_sorted[j].time == test_sorted[i].time) targets.push_back(target_of(test_sorted[j++]));
    const Timestamp hi = test_sorted[i].time - offset_s;
    const auto window = time_window(sorted, hi - window_s, hi);
    PredictionSet part;
    if (window.empty() && model_.kind != CovKind::XOnly) {
      part = prior_only(targets);
      part.fallback_xonly = true;
      ++fallbacks;
    } else {
      part = krige(window, targets);
    }
    part.warnings.clear();
    all.append(part);
    i = j;
  }
  if (fallbacks > 0) all.warnings.push_back(std::to_string(fallbacks) + " forecast times had an empty window; mean-only used");
  return all;
}

PredictionSet Predictor::car_ab_predict(std::span<const Observation> day) const {
  std::set<std::string> cars;
  for (const auto& o : day) cars.insert(o.car_id);
  PredictionSet all;
  if (cars.size() < 2) {
    all.warnings.push_back("single-car day skipped");
    return all;
  }
  for (const auto& car : cars) {
    std::vector<Observation> mine, others;
    for (const auto& o : day) (o.car_id == car ? mine : others).push_back(o);
    std::vector<PredictionTarget> targets;
    for (const auto& o : mine) targets.push_back(target_of(o));
    all.append(krige(others, targets));
  }
  return all;
}

std::vector<std::size_t> nearest_neighbors(std::span<const Observation> archive, PlanarPoint p, std::size_t k) {
  std::vector<std::size_t> idx(archive.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<double> d(archive.size());
  for (std::size_t i = 0; i < archive.size(); ++i) d[i] = planar_distance_km(p, archive[i].planar);
  auto less = [&](std::size_t a, std::size_t b) {
    if (d[a] != d[b]) return d[a] < d[b];
    if (archive[a].time != archive[b].time) return archive[a].time < archive[b].time;
    return a < b;
  };
  k = std::min(k, archive.size());
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k == 0 ? 0 : k - 1), idx.end(), less);
  idx.resize(k);
  std::sort(idx.begin(), idx.end(), less);
  return idx;
}

PredictionSet Predictor::spatial_interpolate(std::span<const Observation> archive,
                                             std::span<const PredictionTarget> targets, std::size_t k) const {
  if (archive.empty()) throw Error("spatial interpolation needs a non-empty archive");
  CovParams spatial = model_.params;
  spatial.kind = CovKind::S;
  PredictionSet set = prepare_targets(targets);
  const ObservationDesign design = build_observation_design(featurizer_, segments_, archive);
  const Vec resid = design.y - design.X * model_.beta;
  const auto n = static_cast<Eigen::Index>(targets.size());
  set.mean_log.resize(n);
  set.var_latent.resize(n);
  set.conditioning_size = std::min(k, archive.size());

  // Targets on the same segment share a neighbour set under a spatial-only
  // covariance, so they are solved together.
  std::map<std::int64_t, std::vector<std::size_t>> by_segment;
  for (std::size_t i = 0; i < targets.size(); ++i) by_segment[targets[i].segment_id].push_back(i);
  for (const auto& [id, members] : by_segment) {
    const auto nn = nearest_neighbors(archive, segments_.at(id).planar, k);
    std::vector<SpacetimePoint> cond;
    Vec r(static_cast<Eigen::Index>(nn.size()));
    for (std::size_t j = 0; j < nn.size(); ++j) {
      cond.push_back(design.points[nn[j]]);
      r[static_cast<Eigen::Index>(j)] = resid[static_cast<Eigen::Index>(nn[j])];
    }
    std::vector<SpacetimePoint> pts;
    for (std::size_t m : members) pts.push_back(set.points[m]);
    const DenseConditional dc = krige_dense(spatial, cond, r, pts);
    for (std::size_t q = 0; q < members.size(); ++q) {
      const auto t = static_cast<Eigen::Index>(members[q]);
      set.mean_log[t] = set.trend[t] + dc.mean[static_cast<Eigen::Index>(q)];
      set.var_latent[t] = dc.var_latent[static_cast<Eigen::Index>(q)];
    }
    set.clamped += dc.clamped;
  }
  set.var_log = set.var_latent.array() + spatial.tau2;
  return set;
}

void write_predictions(const std::string& path, const PredictionSet& pred) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "segment_id,timestamp,mean_log,sd_log,mean_ppb\n";
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out << pred.targets[i].segment_id << ',' << format_iso8601(pred.targets[i].time) << ','
        << format_double(pred.mean_log[k]) << ',' << format_double(std::sqrt(pred.var_log[k])) << ','
        << format_double(std::exp(pred.mean_log[k])) << '\n';
  }
}

}  // namespace stlur
