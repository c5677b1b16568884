#include "stlur/lagsim.hpp"

#include "stlur/common.hpp"
#include "stlur/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace stlur {

void LagSimConfig::validate() const {
  if (thetas.empty() || fit_lags.empty() || horizons.empty()) throw Error("lag simulation needs thetas, lags and horizons");
  if (n_train < 2 || n_test < 1 || reps < 1 || burn_in < 0) throw Error("lag simulation counts must be positive");
  if (std::find(fit_lags.begin(), fit_lags.end(), 1) == fit_lags.end()) throw Error("fit_lags must include the baseline lag 1");
  for (int l : fit_lags) {
    if (l < 1) throw Error("fit lags must be >= 1");
    if (static_cast<std::size_t>(l) + 1 >= n_train) throw Error("training series too short for lag " + std::to_string(l));
  }
  for (int h : horizons) {
    if (h < 1) throw Error("horizons must be >= 1");
    if (static_cast<std::size_t>(h) >= n_test) throw Error("test series too short for horizon " + std::to_string(h));
  }
}

std::vector<double> simulate_series_from_noise(double theta, std::span<const double> z, int burn_in) {
  if (burn_in < 0 || z.size() <= static_cast<std::size_t>(burn_in)) throw Error("innovation series shorter than burn-in");
  std::vector<double> out;
  out.reserve(z.size() - static_cast<std::size_t>(burn_in));
  double y = 0.0, z1 = 0.0, z2 = 0.0;
  for (std::size_t t = 0; t < z.size(); ++t) {
    y = 0.9 * y + theta * z1 + theta * z2 + z[t];
    z2 = z1;
    z1 = z[t];
    if (t >= static_cast<std::size_t>(burn_in)) out.push_back(y);
  }
  return out;
}

std::vector<double> simulate_series(double theta, std::size_t n, std::uint64_t seed, int burn_in) {
  if (n < 1) throw Error("series length must be >= 1");
  if (burn_in < 0) throw Error("burn-in must be >= 0");
  Rng rng(seed);
  std::vector<double> z(n + static_cast<std::size_t>(burn_in));
  for (auto& v : z) v = rng.normal();
  return simulate_series_from_noise(theta, z, burn_in);
}

LagFit fit_lag(std::span<const double> y, int l, bool with_intercept) {
  if (l < 1) throw Error("lag must be >= 1");
  const auto lag = static_cast<std::size_t>(l);
  if (y.size() <= lag + 1) throw Error("series too short for lag " + std::to_string(l));
  const std::size_t n = y.size() - lag;
  LagFit fit;
  if (!with_intercept) {
    std::vector<double> num(n), den(n);
    for (std::size_t t = 0; t < n; ++t) {
      num[t] = y[t + lag] * y[t];
      den[t] = y[t] * y[t];
    }
    const double d = pairwise_sum(den);
    if (d == 0.0) throw Error("lag regression has zero denominator");
    fit.slope = pairwise_sum(num) / d;
    return fit;
  }
  const double mx = pairwise_sum(y.subspan(0, n)) / static_cast<double>(n);
  const double my = pairwise_sum(y.subspan(lag)) / static_cast<double>(n);
  std::vector<double> num(n), den(n);
  for (std::size_t t = 0; t < n; ++t) {
    num[t] = (y[t + lag] - my) * (y[t] - mx);
    den[t] = (y[t] - mx) * (y[t] - mx);
  }
  const double d = pairwise_sum(den);
  if (d == 0.0) throw Error("lag regression has zero denominator");
  fit.slope = pairwise_sum(num) / d;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

double lag_coefficient(double b, int l, int h) {
  if (l < 1 || h < 1) throw Error("lag and horizon must be >= 1");
  if (h % l == 0) return std::pow(b, h / l);
  if (b <= 0.0) throw Error("non-positive slope with fractional exponent");
  return std::pow(b, static_cast<double>(h) / static_cast<double>(l));
}

double predict_lag(double b, int l, int h, double y_lag_h) { return lag_coefficient(b, l, h) * y_lag_h; }

std::string model_name(double theta) {
  if (theta == 0.0) return "AR(1)";
  return "ARMA(1,2)";
}

std::vector<LagSimCell> relative_mse_table(const LagSimConfig& config) {
  config.validate();
  const std::size_t nt = config.thetas.size(), nh = config.horizons.size(), nl = config.fit_lags.size();
  const auto reps = static_cast<std::size_t>(config.reps);
  const std::size_t cells = nt * nh * nl;
  // mse[(a, r)][cell], NaN marks a failed prediction.
  std::vector<double> mse(nt * reps * nh * nl, 0.0);

#pragma omp parallel for schedule(static) num_threads(std::max(1, config.workers))
  for (std::ptrdiff_t job = 0; job < static_cast<std::ptrdiff_t>(nt * reps); ++job) {
    const auto a = static_cast<std::size_t>(job) / reps;
    const auto r = static_cast<std::size_t>(job) % reps;
    const auto series = simulate_series(config.thetas[a], config.n_train + config.n_test,
                                        counter_hash(config.seed, static_cast<std::uint64_t>(job)), config.burn_in);
    const std::span<const double> all(series);
    const auto train = all.subspan(0, config.n_train);
    for (std::size_t li = 0; li < nl; ++li) {
      const int l = config.fit_lags[li];
      const LagFit fit = fit_lag(train, l, config.intercept);
      for (std::size_t hi = 0; hi < nh; ++hi) {
        const int h = config.horizons[hi];
        double& slot = mse[(a * reps + r) * nh * nl + hi * nl + li];
        double coef = 0.0, shift = 0.0;
        try {
          coef = lag_coefficient(fit.slope, l, h);
          if (config.intercept) {
            // Iterating y -> a + b y over h/l steps.
            const double steps = static_cast<double>(h) / static_cast<double>(l);
            shift = fit.slope == 1.0 ? fit.intercept * steps : fit.intercept * (1.0 - coef) / (1.0 - fit.slope);
          }
        } catch (const Error&) {
          slot = std::numeric_limits<double>::quiet_NaN();
          continue;
        }
        const auto hh = static_cast<std::size_t>(h);
        std::vector<double> err;
        err.reserve(config.n_test - hh);
        for (std::size_t t = config.n_train + hh; t < series.size(); ++t) {
          const double e = series[t] - (shift + coef * series[t - hh]);
          err.push_back(e * e);
        }
        slot = pairwise_sum(err) / static_cast<double>(err.size());
      }
    }
  }

  std::vector<LagSimCell> out;
  out.reserve(cells);
  const std::size_t base = static_cast<std::size_t>(std::find(config.fit_lags.begin(), config.fit_lags.end(), 1) - config.fit_lags.begin());
  for (std::size_t a = 0; a < nt; ++a) {
    for (std::size_t hi = 0; hi < nh; ++hi) {
      std::vector<double> means(nl);
      for (std::size_t li = 0; li < nl; ++li) {
        std::vector<double> per_rep(reps);
        for (std::size_t r = 0; r < reps; ++r) per_rep[r] = mse[(a * reps + r) * nh * nl + hi * nl + li];
        means[li] = pairwise_sum(per_rep) / static_cast<double>(reps);
      }
      for (std::size_t li = 0; li < nl; ++li) {
        LagSimCell c;
        c.model = model_name(config.thetas[a]);
        c.theta = config.thetas[a];
        c.h = config.horizons[hi];
        c.l = config.fit_lags[li];
        c.mse = means[li];
        c.failed = std::isnan(means[li]);
        c.rel_mse = li == base ? 1.0 : means[li] / means[base];
        out.push_back(c);
      }
    }
  }
  return out;
}

void write_lag_table(const std::string& path, std::span<const LagSimCell> cells) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "model,h,l,rel_mse\n";
  for (const auto& c : cells) {
    out << c.model << ',' << c.h << ',' << c.l << ',' << (c.failed ? std::string("failed") : format_double(c.rel_mse)) << '\n';
  }
}

}  // namespace stlur
