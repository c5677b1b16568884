#include "stlur/estimation.hpp"

#include "stlur/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_set>

namespace stlur {

namespace {

constexpr std::size_t kMinResiduals = 50;
constexpr double kLogClamp = 30.0;

double clamp_exp(double v) { return std::exp(std::clamp(v, -kLogClamp, kLogClamp)); }

int active_parameters(CovKind kind) {
  switch (kind) {
    case CovKind::XOnly: return 1;
    case CovKind::S: return 3;
    case CovKind::ST: return 4;
    case CovKind::STX: return 5;
  }
  return 0;
}

}  // namespace

void OptimizerConfig::validate() const {
  if (max_iters < 1 || !(rel_tol > 0.0) || restarts < 1 || workers < 1) {
    throw Error("optimizer settings must be positive");
  }
}

OlsFit ols_beta(const Mat& X, const Vec& y) {
  if (X.rows() != y.size()) throw Error("design and response differ in length");
  if (X.rows() <= X.cols()) {
    throw Error("OLS needs more rows than columns (" + std::to_string(X.rows()) + " <= " + std::to_string(X.cols()) + ")");
  }
  Eigen::ColPivHouseholderQR<Mat> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) {
    std::string cols;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < X.cols(); ++k) cols += (cols.empty() ? "" : " ") + std::to_string(perm[k]);
    throw Error("design matrix is rank deficient; near-dependent columns: " + cols);
  }
  OlsFit fit;
  fit.beta = qr.solve(y);
  fit.residuals = y - X * fit.beta;
  return fit;
}

Vec theta_to_log(const CovParams& p) {
  Vec v(active_parameters(p.kind));
  if (p.kind == CovKind::XOnly) {
    v[0] = std::log(p.tau2);
    return v;
  }
  v[0] = std::log(p.sigma2);
  v[1] = std::log(p.tau2);
  v[2] = std::log(p.theta_s);
  if (p.kind == CovKind::ST || p.kind == CovKind::STX) v[3] = std::log(p.theta_t);
  if (p.kind == CovKind::STX) v[4] = std::log(p.theta_x);
  return v;
}

CovParams theta_from_log(CovKind kind, const Vec& v) {
  if (v.size() != active_parameters(kind)) throw Error("wrong parameter count for model kind");
  CovParams p;
  p.kind = kind;
  if (kind == CovKind::XOnly) {
    p.sigma2 = 0.0;
    p.tau2 = clamp_exp(v[0]);
    return p;
  }
  p.sigma2 = clamp_exp(v[0]);
  p.tau2 = clamp_exp(v[1]);
  p.theta_s = clamp_exp(v[2]);
  if (kind == CovKind::ST || kind == CovKind::STX) p.theta_t = clamp_exp(v[3]);
  if (kind == CovKind::STX) p.theta_x = clamp_exp(v[4]);
  return p;
}

ThetaFit fit_theta(const ResidualSeries& series, CovKind kind, const ConditioningScheme& scheme,
                   const OptimizerConfig& config) {
  config.validate();
  series.validate();
  if (series.size() < kMinResiduals) {
    throw Error("fit_theta needs at least " + std::to_string(kMinResiduals) + " residuals, got " + std::to_string(series.size()));
  }
  double mean_sq = 0.0;
  for (double r : series.resid) mean_sq += r * r;
  mean_sq /= static_cast<double>(series.size());
  if (!(mean_sq > 0.0)) throw Error("residuals are identically zero");

  ThetaFit fit;
  if (kind == CovKind::XOnly) {
    // Independent errors: the likelihood maximizer is the mean square.
    fit.params.kind = CovKind::XOnly;
    fit.params.sigma2 = 0.0;
    fit.params.tau2 = mean_sq;
    fit.objective = composite_loglik(fit.params, series, ConditioningSets(series.size()), config.workers);
    fit.converged = true;
    fit.starts_converged = 1;
    return fit;
  }

  const ConditioningSets sets = build_conditioning_sets(series, scheme);
  auto objective = [&](const Vec& v) {
    try {
      return -composite_loglik(theta_from_log(kind, v), series, sets, config.workers);
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  CovParams base;
  base.kind = kind;
  base.sigma2 = 0.5 * mean_sq;
  base.tau2 = 0.5 * mean_sq;
  base.theta_s = 1.0;
  base.theta_t = 1.0;
  base.theta_x = 1.0;
  const Vec base_log = theta_to_log(base);

  SimplexOptions options;
  options.max_iters = config.max_iters;
  options.rel_tol = config.rel_tol;

  bool have_best = false;
  for (int start = 0; start < config.restarts; ++start) {
    Vec x0 = base_log;
    if (start > 0) {
      Rng rng(config.seed, static_cast<std::uint64_t>(start));
      for (Eigen::Index k = 0; k < x0.size(); ++k) x0[k] += std::log(rng.uniform() < 0.5 ? 0.3 : 3.0);
    }
    const SimplexResult run = nelder_mead(objective, x0, options);
    fit.iterations += run.iterations;
    fit.evaluations += run.evaluations;
    if (run.converged) ++fit.starts_converged;
    if (!std::isfinite(run.value)) continue;
    if (!have_best || -run.value > fit.objective) {
      have_best = true;
      fit.params = theta_from_log(kind, run.x);
      fit.objective = -run.value;
      fit.converged = run.converged;
      fit.trace = run.best_trace;
    }
  }
  if (!have_best) throw ThetaFitError("composite likelihood was not finite at any start", fit);
  if (fit.starts_converged == 0) {
    throw ThetaFitError("no optimizer start converged within " + std::to_string(config.max_iters) + " iterations", fit);
  }
  return fit;
}

Featurizer fit_features(std::span<const Observation> obs, const SegmentTable& segments, const FeatureConfig& config,
                        std::vector<double>* t_stats) {
  std::vector<Segment> visited;
  std::set<std::int64_t> seen;
  for (const auto& o : obs) {
    if (seen.insert(o.segment_id).second) visited.push_back(segments.at(o.segment_id));
  }
  std::sort(visited.begin(), visited.end(), [](const Segment& a, const Segment& b) { return a.id < b.id; });
  const Mat table = covariate_table(visited);
  Standardization standardization = fit_standardization(table);
  PcaBasis basis = fit_pca(standardization.apply(table), config.k_computed);

  // PC t-statistics are diagnostics; the retained count stays configured.
  Mat scores(static_cast<Eigen::Index>(obs.size()), basis.k_computed);
  Vec y(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const Vec z = standardization.apply(segments.at(obs[i].segment_id).covariates);
    scores.row(static_cast<Eigen::Index>(i)) = (basis.loadings.transpose() * z).transpose();
    y[static_cast<Eigen::Index>(i)] = obs[i].y;
  }
  const PcSelection selection = select_pcs(scores, y, config.k_retained);
  basis.k_retained = selection.k_retained;
  if (t_stats != nullptr) *t_stats = selection.t_stats;
  return Featurizer(std::move(standardization), std::move(basis), config.utc_offset_hours);
}

ResidualSeries residual_series(std::span<const Observation> obs, const ObservationDesign& design, const Vec& beta) {
  const Vec resid = design.y - design.X * beta;
  ResidualSeries series;
  for (std::size_t i : time_order(obs)) {
    series.points.push_back(design.points[i]);
    series.resid.push_back(resid[static_cast<Eigen::Index>(i)]);
  }
  return series;
}

FittedModel fit_with_features(std::span<const Observation> obs, const SegmentTable& segments,
                              const Featurizer& featurizer, CovKind kind, const ConditioningScheme& scheme,
                              const OptimizerConfig& config) {
  if (obs.empty()) throw Error("no training observations");
  const ObservationDesign design = build_observation_design(featurizer, segments, obs);
  const OlsFit ols = ols_beta(design.X, design.y);
  const ResidualSeries series = residual_series(obs, design, ols.beta);
  const ThetaFit theta = fit_theta(series, kind, scheme, config);

  FittedModel m;
  m.kind = kind;
  m.beta = ols.beta;
  m.params = theta.params;
  m.scheme = scheme;
  m.standardization = featurizer.standardization();
  m.basis = featurizer.basis();
  m.origin = segments.origin();
  m.utc_offset_hours = featurizer.utc_offset_hours();
  m.block_seconds = obs.front().block_seconds;
  m.n_train = obs.size();
  m.objective = theta.objective;
  m.converged = theta.converged;
  m.train_start = obs.front().time;
  m.train_end = obs.front().time;
  for (const auto& o : obs) {
    m.train_start = std::min(m.train_start, o.time);
    m.train_end = std::max(m.train_end, o.time);
  }
  return m;
}

FittedModel two_step_fit(std::span<const Observation> obs, const SegmentTable& segments, CovKind kind,
                         const ConditioningScheme& scheme, const FeatureConfig& features,
                         const OptimizerConfig& config) {
  if (obs.empty()) throw Error("no training observations");
  std::vector<double> t_stats;
  const Featurizer featurizer = fit_features(obs, segments, features, &t_stats);
  FittedModel m = fit_with_features(obs, segments, featurizer, kind, scheme, config);
  m.pc_t_stats = t_stats;
  return m;
}

std::vector<WindowResult> sliding_window_fit(std::span<const Observation> obs, const std::vector<Segment>& segments,
                                             CovKind kind, const ConditioningScheme& scheme,
                                             const FeatureConfig& features, const OptimizerConfig& config,
                                             const SlidingWindowConfig& window) {
  if (window.window_weeks < 1) throw Error("window_weeks must be at least 1");
  if (obs.empty()) throw Error("no observations");
  const SegmentTable table(segments);
  Timestamp first = obs.front().time, last = obs.front().time;
  for (const auto& o : obs) {
    first = std::min(first, o.time);
    last = std::max(last, o.time);
  }
  const std::int64_t offset_s = static_cast<std::int64_t>(std::llround(features.utc_offset_hours * 3600.0));
  const Timestamp anchor = window.origin.value_or(first);
  const Timestamp origin = local_day_index(anchor, features.utc_offset_hours) * kSecondsPerDay - offset_s;
  if (last - origin < static_cast<Timestamp>(window.window_weeks) * kSecondsPerWeek) {
    throw Error("data span is shorter than the sliding window");
  }

  std::vector<WindowResult> results;
  for (std::int64_t week = window.window_weeks;; ++week) {
    const Timestamp start = origin + week * kSecondsPerWeek;
    if (start > last) break;
    const Timestamp train_start = start - static_cast<Timestamp>(window.window_weeks) * kSecondsPerWeek;
    std::vector<Observation> train, test;
    for (const auto& o : obs) {
      if (o.time >= train_start && o.time < start) train.push_back(o);
      if (o.time >= start && o.time < start + kSecondsPerWeek) test.push_back(o);
    }
    WindowResult r;
    r.week_start = start;
    r.n_train = train.size();
    r.n_test = test.size();
    if (train.size() < kMinResiduals) {
      r.warning = "training window has " + std::to_string(train.size()) + " observations; week skipped";
      results.push_back(std::move(r));
      continue;
    }
    if (test.empty()) {
      r.warning = "no test observations; week skipped";
      results.push_back(std::move(r));
      continue;
    }
    try {
      FittedModel model = two_step_fit(train, table, kind, scheme, features, config);
      const Predictor predictor(model, segments);
      const PredictionSet pred = predictor.forecast_observations(obs, test, window.horizon_minutes, window.forecast);
      r.mspe_log = score(pred, test).mspe_log;
      r.model = std::move(model);
    } catch (const Error& e) {
      r.warning = std::string("week skipped: ") + e.what();
    }
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<std::int64_t> distinct_days(std::span<const Observation> obs, double utc_offset_hours) {
  std::set<std::int64_t> days;
  for (const auto& o : obs) days.insert(local_day_index(o.time, utc_offset_hours));
  return {days.begin(), days.end()};
}

std::vector<Observation> resample_days(std::span<const Observation> obs, std::span<const std::size_t> draws,
                                       double utc_offset_hours) {
  const auto days = distinct_days(obs, utc_offset_hours);
  if (draws.size() != days.size()) throw Error("one draw per distinct day is required");
  std::vector<Observation> out;
  for (std::size_t slot = 0; slot < draws.size(); ++slot) {
    if (draws[slot] >= days.size()) throw Error("day draw out of range");
    const std::int64_t source = days[draws[slot]];
    const Timestamp shift = (days[slot] - source) * kSecondsPerDay;
    for (const auto& o : obs) {
      if (local_day_index(o.time, utc_offset_hours) != source) continue;
      Observation copy = o;
      copy.time += shift;
      out.push_back(std::move(copy));
    }
  }
  sort_observations(out);
  return out;
}

std::vector<CovParams> bootstrap_theta(std::span<const Observation> obs, const SegmentTable& segments, CovKind kind,
                                       const ConditioningScheme& scheme, const FeatureConfig& features,
                                       const OptimizerConfig& config, const BootstrapConfig& bootstrap) {
  if (obs.empty()) throw Error("bootstrap needs at least one day of data");
  Timestamp last = obs.front().time;
  for (const auto& o : obs) last = std::max(last, o.time);
  const Timestamp window_start = last - static_cast<Timestamp>(bootstrap.window_weeks) * kSecondsPerWeek;
  std::vector<Observation> window;
  for (const auto& o : obs) {
    if (o.time > window_start) window.push_back(o);
  }
  const auto days = distinct_days(window, features.utc_offset_hours);
  const Featurizer featurizer = fit_features(window, segments, features);

  std::vector<CovParams> out;
  for (int rep = 0; rep < bootstrap.reps; ++rep) {
    Rng rng(bootstrap.seed, static_cast<std::uint64_t>(rep));
    std::vector<std::size_t> draws(days.size());
    for (auto& d : draws) d = rng.index(days.size());
    const auto sample = resample_days(window, draws, features.utc_offset_hours);
    try {
      out.push_back(fit_with_features(sample, segments, featurizer, kind, scheme, config).params);
    } catch (const ThetaFitError& e) {
      out.push_back(e.best().params);
    }
  }
  return out;
}

}  // namespace stlur
