#include "stlur/netdesign.hpp"

#include "stlur/common.hpp"
#include "stlur/linalg.hpp"
#include "stlur/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>

namespace stlur {

namespace {

constexpr std::size_t kTargetBatch = 200;
constexpr double kBatchCellKm = 2.0;

std::int64_t clock_seconds(double hour) { return static_cast<std::int64_t>(std::llround(hour * 3600.0)); }

/// Σ_i c_iᵀ (Σ_J + τ²I)⁻¹ c_i over the given targets.
double explained_sum(const CovParams& params, const JitteredCholesky& chol, std::span<const SpacetimePoint> cond,
                     std::span<const SpacetimePoint> targets) {
  Mat cross(static_cast<Eigen::Index>(cond.size()), static_cast<Eigen::Index>(targets.size()));
  for (std::size_t t = 0; t < targets.size(); ++t) cross.col(static_cast<Eigen::Index>(t)) = cross_cov(params, targets[t], cond);
  const Mat w = chol.half_solve(cross);
  std::vector<double> per_target(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) per_target[t] = w.col(static_cast<Eigen::Index>(t)).squaredNorm();
  return pairwise_sum(per_target);
}

double prior_variance(const CovParams& params, std::span<const SpacetimePoint> targets) {
  std::vector<double> v(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) v[i] = cov(params, targets[i], targets[i]);
  return pairwise_sum(v) / static_cast<double>(targets.size()) + params.tau2;
}

MspeResult capped_mspe(const CovParams& params, std::span<const SpacetimePoint> conditioning,
                       std::span<const SpacetimePoint> targets, std::size_t cap) {
  MspeResult result;
  result.cap_bound = true;
  std::vector<std::size_t> order(targets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto cell = [&](std::size_t i) {
    return std::make_pair(std::floor(targets[i].planar.east_km / kBatchCellKm), std::floor(targets[i].planar.north_km / kBatchCellKm));
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cell(a) < cell(b); });

  std::vector<double> sums;
  for (std::size_t start = 0; start < order.size(); start += kTargetBatch) {
    const std::size_t end = std::min(order.size(), start + kTargetBatch);
    std::vector<SpacetimePoint> batch;
    for (std::size_t k = start; k < end; ++k) batch.push_back(targets[order[k]]);
    std::vector<double> score(conditioning.size(), 0.0);
    for (std::size_t j = 0; j < conditioning.size(); ++j) {
      for (const auto& t : batch) score[j] += cov(params, t, conditioning[j]);
    }
    std::vector<std::size_t> idx(conditioning.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    std::vector<SpacetimePoint> cond;
    for (std::size_t j : idx) cond.push_back(conditioning[j]);
    const JitteredCholesky chol(cov_matrix(params, cond, true));
    sums.push_back(explained_sum(params, chol, cond, batch));
  }
  result.mspe = prior_variance(params, targets) - pairwise_sum(sums) / static_cast<double>(targets.size());
  return result;
}

std::vector<SpacetimePoint> to_points(std::span<const Observation> obs, const std::unordered_map<std::int64_t, const DesignSite*>& sites) {
  std::vector<SpacetimePoint> pts;
  pts.reserve(obs.size());
  for (const auto& o : obs) {
    auto it = sites.find(o.segment_id);
    std::vector<double> x = it == sites.end() ? std::vector<double>{} : it->second->x_cov;
    pts.push_back({o.planar, to_hours(o.time), std::move(x)});
  }
  return pts;
}

}  // namespace

std::string_view to_string(MonitorKind kind) { return kind == MonitorKind::Mobile ? "mobile" : "fixed"; }

void DesignWindow::validate() const {
  if (sampling_seconds < 1) throw Error("sampling period must be at least 1 second");
  if (!(route_start_h < route_end_h) || !(cond_start_h < cond_end_h)) throw Error("design windows must have start < end");
}

Timestamp nominal_time(double local_hour, double utc_offset_hours) {
  return clock_seconds(local_hour) - clock_seconds(utc_offset_hours);
}

std::vector<Observation> sample_routes(std::span<const std::vector<Observation>> archive, int c, std::uint64_t seed,
                                       const DesignWindow& window) {
  window.validate();
  if (c < 1) throw Error("route count must be at least 1");
  const std::int64_t lo = clock_seconds(window.route_start_h);
  const std::int64_t hi = clock_seconds(window.route_end_h);
  std::vector<std::size_t> qualifying;
  for (std::size_t d = 0; d < archive.size(); ++d) {
    const bool in_service = std::any_of(archive[d].begin(), archive[d].end(), [&](const Observation& o) {
      const auto s = local_seconds_of_day(o.time, window.utc_offset_hours);
      return s >= lo && s < hi;
    });
    if (in_service) qualifying.push_back(d);
  }
  if (qualifying.empty()) throw Error("no archive day is in service during the route window");

  Rng rng(seed);
  std::vector<Observation> out;
  for (int k = 0; k < c; ++k) {
    const auto& day = archive[qualifying[rng.index(qualifying.size())]];
    std::vector<Observation> sorted(day.begin(), day.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const Observation& a, const Observation& b) { return a.time < b.time; });
    std::int64_t last_cell = std::numeric_limits<std::int64_t>::min();
    for (const auto& o : sorted) {
      const auto s = local_seconds_of_day(o.time, window.utc_offset_hours);
      if (s < lo || s >= hi) continue;
      const std::int64_t cell = s / window.sampling_seconds;
      if (cell == last_cell) continue;
      last_cell = cell;
      Observation copy = o;
      copy.car_id = "route" + std::to_string(k);
      copy.time = s - clock_seconds(window.utc_offset_hours);
      out.push_back(std::move(copy));
    }
  }
  return out;
}

std::vector<Observation> sample_fixed_sites(std::span<const DesignSite> sites, std::size_t m_sites, std::uint64_t seed,
                                            const DesignWindow& window) {
  window.validate();
  if (m_sites > sites.size()) throw Error("more fixed sites requested than candidate locations");
  Rng rng(seed);
  const auto chosen = sample_without_replacement(rng, sites.size(), m_sites);
  const std::int64_t lo = clock_seconds(window.cond_start_h);
  const std::int64_t hi = clock_seconds(window.cond_end_h);
  std::vector<Observation> out;
  for (std::size_t k : chosen) {
    for (std::int64_t s = lo; s < hi; s += window.sampling_seconds) {
      Observation o;
      o.car_id = "site" + std::to_string(sites[k].segment_id);
      o.segment_id = sites[k].segment_id;
      o.planar = sites[k].planar;
      o.time = s - clock_seconds(window.utc_offset_hours);
      o.block_seconds = window.sampling_seconds;
      out.push_back(std::move(o));
    }
  }
  return out;
}

std::vector<MspeResult> expected_mspe(const CovParams& params, std::span<const SpacetimePoint> conditioning,
                                      std::span<const std::vector<SpacetimePoint>> target_sets, std::size_t cap) {
  params.validate();
  if (conditioning.empty()) throw Error("expected MSPE needs a non-empty conditioning set");
  if (cap < 1) throw Error("conditioning cap must be at least 1");
  for (const auto& t : target_sets) {
    if (t.empty()) throw Error("expected MSPE needs at least one target");
  }
  std::vector<MspeResult> out;
  if (conditioning.size() > cap) {
    for (const auto& t : target_sets) out.push_back(capped_mspe(params, conditioning, t, cap));
    return out;
  }
  const JitteredCholesky chol(cov_matrix(params, conditioning, true));
  for (const auto& t : target_sets) {
    MspeResult r;
    r.mspe = prior_variance(params, t) - explained_sum(params, chol, conditioning, t) / static_cast<double>(t.size());
    out.push_back(r);
  }
  return out;
}

MspeResult expected_mspe(const CovParams& params, std::span<const SpacetimePoint> conditioning,
                         std::span<const SpacetimePoint> targets, std::size_t cap) {
  const std::vector<std::vector<SpacetimePoint>> sets{std::vector<SpacetimePoint>(targets.begin(), targets.end())};
  return expected_mspe(params, conditioning, sets, cap).front();
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("quantile of empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

NetworkReport compare_networks(std::span<const std::vector<Observation>> archive, std::span<const DesignSite> sites,
                               const NetworkExperimentConfig& config) {
  config.window.validate();
  config.params.validate();
  if (config.max_count < 1 || config.reps < 1) throw Error("network experiment needs counts and reps >= 1");
  if (sites.empty()) throw Error("no candidate sites");

  std::unordered_map<std::int64_t, const DesignSite*> by_id;
  for (const auto& s : sites) by_id.emplace(s.segment_id, &s);

  Rng target_rng(counter_hash(config.seed, 0x7a7a));
  const auto target_idx = sample_without_replacement(target_rng, sites.size(), std::min(config.n_targets, sites.size()));
  std::vector<SpacetimePoint> forecast_targets, interp_targets;
  for (std::size_t k : target_idx) {
    const auto& s = sites[k];
    forecast_targets.push_back({s.planar, to_hours(nominal_time(config.window.forecast_h, config.window.utc_offset_hours)), s.x_cov});
    interp_targets.push_back({s.planar, to_hours(nominal_time(config.window.interp_h, config.window.utc_offset_hours)), s.x_cov});
  }

  const std::vector<std::vector<SpacetimePoint>> target_sets{forecast_targets, interp_targets};
  const Timestamp cond_lo = nominal_time(config.window.cond_start_h, config.window.utc_offset_hours);
  const Timestamp cond_hi = nominal_time(config.window.cond_end_h, config.window.utc_offset_hours);

  const std::size_t jobs = 2 * static_cast<std::size_t>(config.max_count) * static_cast<std::size_t>(config.reps);
  std::vector<NetworkRow> rows(jobs);
  std::vector<std::string> errors(jobs);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, config.workers))
  for (std::ptrdiff_t job = 0; job < static_cast<std::ptrdiff_t>(jobs); ++job) {
    const auto j = static_cast<std::size_t>(job);
    const MonitorKind kind = j % 2 == 0 ? MonitorKind::Mobile : MonitorKind::Fixed;
    const int count = static_cast<int>(j / 2 / static_cast<std::size_t>(config.reps)) + 1;
    const int rep = static_cast<int>(j / 2 % static_cast<std::size_t>(config.reps));
    const std::uint64_t seed = counter_hash(config.seed, (static_cast<std::uint64_t>(count) << 32) | (static_cast<std::uint64_t>(rep) << 1) | (j % 2));
    try {
      std::vector<Observation> monitors;
      if (kind == MonitorKind::Mobile) {
        for (auto& o : sample_routes(archive, count, seed, config.window)) {
          if (o.time >= cond_lo && o.time < cond_hi) monitors.push_back(std::move(o));
        }
      } else {
        monitors = sample_fixed_sites(sites, static_cast<std::size_t>(count), seed, config.window);
      }
      if (monitors.empty()) throw Error("no monitor data in the conditioning window");
      const auto cond = to_points(monitors, by_id);
      const auto r = expected_mspe(config.params, cond, target_sets, config.cap);
      rows[j] = {kind, count, rep, r[0].mspe, r[1].mspe, r[0].cap_bound || r[1].cap_bound};
    } catch (const std::exception& e) {
      errors[j] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(e);
  }

  NetworkReport report;
  report.rows = rows;
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const NetworkRow& a, const NetworkRow& b) {
    if (a.kind != b.kind) return a.kind == MonitorKind::Mobile;
    if (a.count != b.count) return a.count < b.count;
    return a.rep < b.rep;
  });
  for (const auto& r : report.rows) report.cap_bound_rows += r.cap_bound ? 1 : 0;

  for (MonitorKind kind : {MonitorKind::Mobile, MonitorKind::Fixed}) {
    for (int count = 1; count <= config.max_count; ++count) {
      std::vector<double> f, in;
      for (const auto& r : report.rows) {
        if (r.kind == kind && r.count == count) {
          f.push_back(r.mspe_forecast);
          in.push_back(r.mspe_interp);
        }
      }
      NetworkSummary s;
      s.kind = kind;
      s.count = count;
      s.forecast_mean = pairwise_sum(f) / static_cast<double>(f.size());
      s.forecast_lo = quantile(f, 0.025);
      s.forecast_hi = quantile(f, 0.975);
      s.interp_mean = pairwise_sum(in) / static_cast<double>(in.size());
      s.interp_lo = quantile(in, 0.025);
      s.interp_hi = quantile(in, 0.975);
      report.summary.push_back(s);
    }
    std::vector<double> curve;
    for (const auto& s : report.summary) {
      if (s.kind == kind) curve.push_back(s.forecast_mean);
    }
    const double total = curve.front() - curve.back();
    int flatten = config.max_count;
    for (std::size_t k = 0; k < curve.size(); ++k) {
      if (curve[k] - curve.back() <= 0.1 * total) {
        flatten = static_cast<int>(k) + 1;
        break;
      }
    }
    (kind == MonitorKind::Mobile ? report.flatten_mobile : report.flatten_fixed) = flatten;
  }
  return report;
}

void write_design_rows(const std::string& path, std::span<const NetworkRow> rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "kind,count,rep,mspe_forecast,mspe_interp\n";
  for (const auto& r : rows) {
    out << to_string(r.kind) << ',' << r.count << ',' << r.rep << ',' << format_double(r.mspe_forecast) << ','
        << format_double(r.mspe_interp) << '\n';
  }
}

}  // namespace stlur
