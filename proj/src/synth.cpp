#include "stlur/synth.hpp"

#include "stlur/common.hpp"
#include "stlur/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace stlur {

namespace {

constexpr int kLatentFields = 4;
constexpr int kWavesPerField = 3;

PlanarPoint node_position(const GridSpec& grid, int i, int j) {
  const double half = 0.5 * grid.spacing_km * (grid.lines() - 1);
  return {i * grid.spacing_km - half, j * grid.spacing_km - half};
}

}  // namespace

int GridSpec::lines() const {
  if (!(spacing_km > 0.0) || !(extent_km >= spacing_km)) throw Error("grid extent and spacing must be positive");
  return static_cast<int>(std::floor(extent_km / spacing_km + 1e-9)) + 1;
}

std::vector<RoutePoint> grid_random_walk(Rng& rng, const GridSpec& grid, double speed_kmh, double start_h,
                                         double duration_h, double step_seconds) {
  if (!(speed_kmh > 0.0) || !(step_seconds > 0.0) || !(duration_h >= 0.0)) throw Error("invalid route parameters");
  const int n = grid.lines();
  int i = static_cast<int>(rng.index(static_cast<std::uint64_t>(n)));
  int j = static_cast<int>(rng.index(static_cast<std::uint64_t>(n)));
  int di = 0, dj = 0;
  const double step_km = speed_kmh * step_seconds / 3600.0;
  const auto steps = static_cast<std::size_t>(std::floor(duration_h * 3600.0 / step_seconds + 1e-9));

  std::vector<RoutePoint> out;
  out.reserve(steps);
  double along = 0.0;  // distance travelled along the current edge
  int ni = i, nj = j;
  auto choose = [&]() {
    static constexpr int dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    std::vector<int> ok;
    for (int d = 0; d < 4; ++d) {
      const int ti = i + dirs[d][0], tj = j + dirs[d][1];
      if (ti < 0 || tj < 0 || ti >= n || tj >= n) continue;
      if (dirs[d][0] == -di && dirs[d][1] == -dj && (di != 0 || dj != 0)) continue;
      ok.push_back(d);
    }
    if (ok.empty()) {
      di = -di;
      dj = -dj;
    } else {
      const int d = ok[rng.index(ok.size())];
      di = dirs[d][0];
      dj = dirs[d][1];
    }
    ni = i + di;
    nj = j + dj;
  };
  choose();
  for (std::size_t k = 0; k < steps; ++k) {
    const PlanarPoint a = node_position(grid, i, j), b = node_position(grid, ni, nj);
    const double f = along / grid.spacing_km;
    out.push_back({{a.east_km + f * (b.east_km - a.east_km), a.north_km + f * (b.north_km - a.north_km)},
                   start_h + static_cast<double>(k) * step_seconds / 3600.0});
    along += step_km;
    while (along >= grid.spacing_km) {
      along -= grid.spacing_km;
      i = ni;
      j = nj;
      choose();
    }
  }
  return out;
}

Vec simulate_dense(const CovParams& params, std::span<const SpacetimePoint> points, Rng& rng, bool with_nugget) {
  const JitteredCholesky chol(cov_matrix(params, points, false));
  Vec z(static_cast<Eigen::Index>(points.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  Vec out = chol.matrix_l() * z;
  if (with_nugget) {
    const double sd = std::sqrt(params.tau2);
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += sd * rng.normal();
  }
  return out;
}

Vec simulate_sequential(const CovParams& params, std::span<const SpacetimePoint> points, std::size_t neighbors, Rng& rng,
                        bool with_nugget) {
  const auto n = points.size();
  Vec latent(static_cast<Eigen::Index>(n));
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i) {
    const double marginal = cov(params, points[i], points[i]);
    const std::size_t lo = i > neighbors ? i - neighbors : 0;
    double mean = 0.0, var = marginal;
    if (i > lo) {
      idx.clear();
      for (std::size_t j = lo; j < i; ++j) idx.push_back(j);
      // Small jitter keeps near-duplicate consecutive points stable.
      Mat k = cov_matrix(params, points, idx, false);
      k.diagonal().array() += 1e-6 * marginal;
      const JitteredCholesky chol(k);
      const Vec c = cross_cov(params, points[i], points, idx);
      Vec prev(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t a = 0; a < idx.size(); ++a) prev[static_cast<Eigen::Index>(a)] = latent[static_cast<Eigen::Index>(idx[a])];
      const Vec w = chol.half_solve(c);
      mean = w.dot(chol.half_solve(prev));
      var = std::max(marginal - w.squaredNorm(), 1e-10 * marginal);
    }
    latent[static_cast<Eigen::Index>(i)] = mean + std::sqrt(var) * rng.normal();
  }
  if (with_nugget) {
    const double sd = std::sqrt(params.tau2);
    for (Eigen::Index i = 0; i < latent.size(); ++i) latent[i] += sd * rng.normal();
  }
  return latent;
}

void SynthConfig::validate() const {
  truth.validate();
  grid.lines();
  if (cars < 1 || days < 1) throw Error("synthetic data needs at least one car and one day");
  if (!(drive_start_h < drive_end_h)) throw Error("drive window must have start < end");
  if (!(sample_seconds > 0.0)) throw Error("sample period must be positive");
  if (covariate_grid < 2) throw Error("covariate grid must have at least 2 points per side");
  if (!(base_ppb > 0.0)) throw Error("base concentration must be positive");
}

std::vector<double> synth_latent_fields(PlanarPoint p, std::uint64_t seed) {
  std::vector<double> out(kLatentFields, 0.0);
  for (int f = 0; f < kLatentFields; ++f) {
    Rng rng(seed, 1000 + static_cast<std::uint64_t>(f));
    for (int w = 0; w < kWavesPerField; ++w) {
      const double wavelength = 3.0 + 6.0 * rng.uniform();
      const double angle = 2.0 * std::numbers::pi * rng.uniform();
      const double phase = 2.0 * std::numbers::pi * rng.uniform();
      const double k = 2.0 * std::numbers::pi / wavelength;
      out[static_cast<std::size_t>(f)] +=
          std::sqrt(2.0 / kWavesPerField) * std::cos(k * (std::cos(angle) * p.east_km + std::sin(angle) * p.north_km) + phase);
    }
  }
  return out;
}

SynthData generate_synthetic(const SynthConfig& config) {
  config.validate();
  SynthData data;
  const int n = config.grid.lines();

  std::int64_t way = 1;
  for (int horizontal = 0; horizontal < 2; ++horizontal) {
    for (int a = 0; a < n; ++a) {
      Centerline c;
      c.way_id = way++;
      for (int b = 0; b < n; ++b) {
        const PlanarPoint p = horizontal ? node_position(config.grid, b, a) : node_position(config.grid, a, b);
        c.vertices.push_back(unproject(p, config.origin));
      }
      data.centerlines.push_back(std::move(c));
    }
  }

  // Covariates mix the latent surfaces with a little independent noise.
  Rng mix_rng(config.seed, 7);
  std::array<std::array<double, kLatentFields>, kCovariateCount> mix{};
  for (auto& row : mix) {
    for (auto& v : row) v = mix_rng.normal();
  }
  const double half = 0.5 * config.grid.extent_km + config.grid.spacing_km;
  for (int a = 0; a < config.covariate_grid; ++a) {
    for (int b = 0; b < config.covariate_grid; ++b) {
      const PlanarPoint p{-half + 2.0 * half * a / (config.covariate_grid - 1), -half + 2.0 * half * b / (config.covariate_grid - 1)};
      const auto g = synth_latent_fields(p, config.seed);
      CovariatePoint cp;
      cp.position = unproject(p, config.origin);
      for (std::size_t m = 0; m < kCovariateCount; ++m) {
        double v = 0.1 * mix_rng.normal();
        for (int f = 0; f < kLatentFields; ++f) v += mix[m][static_cast<std::size_t>(f)] * g[static_cast<std::size_t>(f)];
        cp.covariates[m] = v;
      }
      data.covariate_points.push_back(cp);
    }
  }

  struct Raw {
    std::size_t car;
    Timestamp time;
    PlanarPoint planar;
  };
  std::vector<Raw> raw;
  Rng route_rng(config.seed, 11);
  const double duration = config.drive_end_h - config.drive_start_h;
  for (int d = 0; d < config.days; ++d) {
    for (int car = 0; car < config.cars; ++car) {
      const auto route = grid_random_walk(route_rng, config.grid, config.speed_kmh, config.drive_start_h, duration, config.sample_seconds);
      for (const auto& rp : route) {
        const Timestamp t = config.first_day + static_cast<Timestamp>(d) * kSecondsPerDay +
                            static_cast<Timestamp>(std::llround(rp.time_h * 3600.0));
        raw.push_back({static_cast<std::size_t>(car), t, rp.planar});
      }
    }
  }
  std::stable_sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) {
    return a.time != b.time ? a.time < b.time : a.car < b.car;
  });
  // Duplicate timestamps per car can arise from rounding; keep the first.
  raw.erase(std::unique(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) { return a.time == b.time && a.car == b.car; }),
            raw.end());

  std::vector<SpacetimePoint> pts;
  std::vector<double> mean;
  pts.reserve(raw.size());
  mean.reserve(raw.size());
  for (const auto& r : raw) {
    const auto g = synth_latent_fields(r.planar, config.seed);
    const double hour = to_hours(r.time) + config.utc_offset_hours;
    const double diurnal = std::cos(2.0 * std::numbers::pi * (hour - 17.0) / 24.0);
    mean.push_back(std::log(config.base_ppb) + 0.3 * g[0] + 0.2 * g[1] + 0.15 * diurnal + 0.1 * g[2] * diurnal);
    pts.push_back({r.planar, to_hours(r.time), {g[0], g[1], g[2]}});
  }
  Rng field_rng(config.seed, 13);
  const Vec field = simulate_sequential(config.truth, pts, config.sim_neighbors, field_rng, true);

  Rng noise_rng(config.seed, 17);
  data.samples.reserve(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    PlanarPoint p = raw[k].planar;
    p.east_km += config.gps_noise_m * 1e-3 * noise_rng.normal();
    p.north_km += config.gps_noise_m * 1e-3 * noise_rng.normal();
    if (noise_rng.uniform() < config.glitch_rate) p.east_km += 2.0 * config.grid.extent_km;
    RawSample s;
    s.car_id = "car" + std::to_string(raw[k].car + 1);
    s.time = raw[k].time;
    s.position = unproject(p, config.origin);
    s.no2_ppb = std::exp(mean[k] + field[static_cast<Eigen::Index>(k)]);
    data.samples.push_back(std::move(s));
  }
  std::stable_sort(data.samples.begin(), data.samples.end(), [](const RawSample& a, const RawSample& b) {
    return a.car_id != b.car_id ? a.car_id < b.car_id : a.time < b.time;
  });
  return data;
}

}  // namespace stlur
