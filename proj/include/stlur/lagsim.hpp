#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stlur {

struct LagSimConfig {
  std::vector<double> thetas{0.0, 0.9};
  std::size_t n_train = 10000;
  std::size_t n_test = 10000;
  int reps = 1000;
  std::vector<int> fit_lags{1, 2, 5, 10, 20};
  std::vector<int> horizons{1, 5, 10, 20};
  std::uint64_t seed = 0;
  int burn_in = 500;
  bool intercept = false;
  int workers = 1;

  void validate() const;
};

/// Y_t = 0.9 Y_{t-1} + θ Z_{t-1} + θ Z_{t-2} + Z_t from a zero start;
/// the first `burn_in` values are discarded.
std::vector<double> simulate_series(double theta, std::size_t n, std::uint64_t seed, int burn_in = 500);

/// Same recursion driven by supplied innovations (length burn_in + n).
std::vector<double> simulate_series_from_noise(double theta, std::span<const double> z, int burn_in);

struct LagFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Regression of Y_t on Y_{t-l}; no intercept unless requested.
LagFit fit_lag(std::span<const double> y, int l, bool with_intercept = false);

/// b^{h/l} (throws when b <= 0 and h/l is not an integer).
double lag_coefficient(double b, int l, int h);
double predict_lag(double b, int l, int h, double y_lag_h);

struct LagSimCell {
  std::string model;
  double theta = 0.0;
  int h = 0;
  int l = 0;
  double mse = 0.0;
  double rel_mse = 0.0;
  bool failed = false;
};

std::string model_name(double theta);

/// Mean test MSE per (θ, h, l) over reps, each divided by the l = 1 cell.
std::vector<LagSimCell> relative_mse_table(const LagSimConfig& config);

void write_lag_table(const std::string& path, std::span<const LagSimCell> cells);

}  // namespace stlur
