#include "stlur/vecchia.hpp"

#include "stlur/linalg.hpp"
#include "stlur/rng.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>

namespace stlur {

namespace {

// Times are stored in hours; window edges are compared with this slack so
// that points exactly on an edge stay excluded despite rounding.
constexpr double kEdgeSlackHours = 1e-9;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double normal_logpdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

}  // namespace

std::string_view to_string(ConditioningMode mode) {
  return mode == ConditioningMode::LagWindow ? "lag_window" : "k_nearest_time";
}

ConditioningMode parse_conditioning_mode(std::string_view text) {
  if (text == "lag_window" || text == "LAG_WINDOW") return ConditioningMode::LagWindow;
  if (text == "k_nearest_time" || text == "K_NEAREST_TIME") return ConditioningMode::KNearestTime;
  throw Error("unknown conditioning mode '" + std::string(text) + "'");
}

void ConditioningScheme::validate() const {
  if (max_size < 1) throw Error("conditioning max_size must be at least 1");
  if (mode == ConditioningMode::LagWindow && (!(lag_minutes >= 0.0) || !(width_minutes > 0.0))) {
    throw Error("conditioning window needs lag >= 0 and width > 0");
  }
}

void ResidualSeries::validate() const {
  if (points.size() != resid.size()) throw Error("residual series: points and residuals differ in length");
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].time_h < points[i - 1].time_h) throw Error("residual series is not ordered in time");
  }
}

ConditioningSets build_conditioning_sets(const ResidualSeries& series, const ConditioningScheme& scheme) {
  scheme.validate();
  series.validate();
  const std::size_t n = series.size();
  ConditioningSets sets(n);
  if (scheme.mode == ConditioningMode::KNearestTime) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t first = i > scheme.max_size ? i - scheme.max_size : 0;
      for (std::size_t j = first; j < i; ++j) sets[i].push_back(j);
    }
    return sets;
  }

  std::vector<double> times(n);
  for (std::size_t i = 0; i < n; ++i) times[i] = series.points[i].time_h;
  const double lag_h = scheme.lag_minutes / 60.0;
  const double far_h = (scheme.lag_minutes + scheme.width_minutes) / 60.0;
  for (std::size_t i = 0; i < n; ++i) {
    // t_i - t_j in (lag, lag + width)  <=>  t_j in (t_i - lag - width, t_i - lag)
    const double lo_edge = times[i] - far_h + kEdgeSlackHours;
    const double hi_edge = scheme.closed_left ? times[i] - lag_h + kEdgeSlackHours : times[i] - lag_h - kEdgeSlackHours;
    const auto begin = times.begin();
    const auto end = begin + static_cast<std::ptrdiff_t>(i);
    const auto lo = std::upper_bound(begin, end, lo_edge);
    const auto hi = scheme.closed_left ? std::upper_bound(lo, end, hi_edge) : std::lower_bound(lo, end, hi_edge);
    const auto first = static_cast<std::size_t>(lo - begin);
    const auto count = static_cast<std::size_t>(hi - lo);
    if (count <= scheme.max_size) {
      for (std::size_t k = 0; k < count; ++k) sets[i].push_back(first + k);
    } else {
      Rng rng(scheme.seed, i);
      for (std::size_t k : sample_without_replacement(rng, count, scheme.max_size)) sets[i].push_back(first + k);
    }
  }
  return sets;
}

ConditioningSets full_conditioning_sets(std::size_t n) {
  ConditioningSets sets(n);
  for (std::size_t i = 0; i < n; ++i) {
    sets[i].resize(i);
    for (std::size_t j = 0; j < i; ++j) sets[i][j] = j;
  }
  return sets;
}

ConditionalTerm conditional_loglik_term(const CovParams& params, const ResidualSeries& series, std::size_t i,
                                        std::span<const std::size_t> set) {
  const auto& target = series.points[i];
  const double marginal = cov(params, target, target) + params.tau2;
  ConditionalTerm term;
  if (set.empty()) {
    term.variance = marginal;
  } else {
    for (std::size_t j : set) {
      if (j >= i) throw Error("conditioning set for index " + std::to_string(i) + " contains a later index");
    }
    const Mat sigma22 = cov_matrix(params, series.points, set, true);
    const Vec sigma21 = cross_cov(params, target, series.points, set);
    Vec e(static_cast<Eigen::Index>(set.size()));
    for (std::size_t k = 0; k < set.size(); ++k) e[static_cast<Eigen::Index>(k)] = series.resid[set[k]];
    std::optional<JitteredCholesky> chol;
    try {
      chol.emplace(sigma22);
    } catch (const Error& err) {
      throw Error(std::string(err.what()) + " at index " + std::to_string(i));
    }
    const Vec w = chol->half_solve(sigma21);
    const Vec z = chol->half_solve(e);
    term.mean = w.dot(z);
    term.variance = marginal - w.squaredNorm();
    term.jitter = chol->jitter();
  }
  const double floor = kInitialJitter * std::max(marginal, 1e-300);
  if (!(term.variance > floor)) {
    term.variance = floor;
    term.degenerate = true;
  }
  term.value = normal_logpdf(series.resid[i], term.mean, term.variance);
  return term;
}

double composite_loglik(const CovParams& params, const ResidualSeries& series, const ConditioningSets& sets,
                        int workers) {
  params.validate();
  if (sets.size() != series.size()) throw Error("conditioning sets do not match the series");
  const auto n = static_cast<std::ptrdiff_t>(series.size());
  std::vector<double> terms(series.size(), 0.0);
  std::vector<std::string> errors(series.size());
#pragma omp parallel for schedule(static) num_threads(std::max(1, workers))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      terms[k] = conditional_loglik_term(params, series, k, sets[k]).value;
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  for (const auto& err : errors) {
    if (!err.empty()) throw Error(err);
  }
  return pairwise_sum(terms);
}

double dense_loglik(const CovParams& params, const ResidualSeries& series) {
  const Mat sigma = cov_matrix(params, series.points, true);
  const JitteredCholesky chol(sigma);
  const Vec r = Eigen::Map<const Vec>(series.resid.data(), static_cast<Eigen::Index>(series.size()));
  const Vec z = chol.half_solve(r);
  return -0.5 * (static_cast<double>(series.size()) * kLog2Pi + chol.log_det() + z.squaredNorm());
}

}  // namespace stlur
