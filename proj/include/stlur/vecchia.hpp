#pragma once

#include "stlur/covariance.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace stlur {

enum class ConditioningMode {
  LagWindow,      ///< observations between lag and lag+width minutes earlier
  KNearestTime,   ///< the max_size most recent earlier observations
};

std::string_view to_string(ConditioningMode mode);
ConditioningMode parse_conditioning_mode(std::string_view text);

struct ConditioningScheme {
  double lag_minutes = 0.0;
  double width_minutes = 60.0;
  std::size_t max_size = 100;
  std::uint64_t seed = 0;
  ConditioningMode mode = ConditioningMode::LagWindow;
  /// Admit t_i - t_j == lag (the open interval excludes it by default).
  bool closed_left = false;

  void validate() const;
};

/// Residuals ordered by time, with their space-time-covariate locations.
struct ResidualSeries {
  std::vector<SpacetimePoint> points;
  std::vector<double> resid;

  std::size_t size() const { return resid.size(); }
  void validate() const;
};

using ConditioningSets = std::vector<std::vector<std::size_t>>;

/// N_i for every i. Oversized sets are thinned to max_size by a uniform draw
/// keyed on (seed, i), so each set can be rebuilt in isolation.
ConditioningSets build_conditioning_sets(const ResidualSeries& series, const ConditioningScheme& scheme);

/// N_i = {0, ..., i-1}; the composite likelihood is then exact.
ConditioningSets full_conditioning_sets(std::size_t n);

struct ConditionalTerm {
  double value = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  /// Conditional variance collapsed to (numerically) zero and was floored.
  bool degenerate = false;
  double jitter = 0.0;
};

/// Log density of resid[i] given resid[N_i] under the conditional normal.
ConditionalTerm conditional_loglik_term(const CovParams& params, const ResidualSeries& series, std::size_t i,
                                        std::span<const std::size_t> set);

/// Σ_i log f(ε_i | ε_{N_i}). Terms are evaluated on `workers` threads and
/// summed in a fixed order, so the result does not depend on worker count.
double composite_loglik(const CovParams& params, const ResidualSeries& series, const ConditioningSets& sets,
                        int workers = 1);

/// Dense multivariate normal log density of the whole series.
double dense_loglik(const CovParams& params, const ResidualSeries& series);

}  // namespace stlur
