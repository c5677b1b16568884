#pragma once

#include "stlur/common.hpp"
#include "stlur/geo.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace stlur {

/// The four model families, from mean-only to covariates-in-covariance.
enum class CovKind { XOnly, S, ST, STX };

std::string_view to_string(CovKind kind);
CovKind parse_cov_kind(std::string_view text);

/// Variances in log-ppb², ranges in km (space), hours (time) and
/// standardized PC units (covariates). Ranges not used by `kind` are ignored.
struct CovParams {
  CovKind kind = CovKind::ST;
  double sigma2 = 1.0;
  double tau2 = 0.0;
  double theta_s = 1.0;
  double theta_t = 1.0;
  double theta_x = 1.0;

  void validate() const;
  double total_variance() const { return sigma2 + tau2; }
};

struct SpacetimePoint {
  PlanarPoint planar;
  double time_h = 0.0;
  std::vector<double> x_cov;
};

/// Covariance of the latent process between two points; never includes the
/// nugget.
double cov(const CovParams& params, const SpacetimePoint& a, const SpacetimePoint& b);

/// Entry (i, j) = cov(p_i, p_j), plus tau2 on the diagonal when requested.
Mat cov_matrix(const CovParams& params, std::span<const SpacetimePoint> points, bool add_nugget);

/// Same as cov_matrix on the subset `idx` of `points`.
Mat cov_matrix(const CovParams& params, std::span<const SpacetimePoint> points, std::span<const std::size_t> idx,
               bool add_nugget);

Vec cross_cov(const CovParams& params, const SpacetimePoint& target, std::span<const SpacetimePoint> points);
Vec cross_cov(const CovParams& params, const SpacetimePoint& target, std::span<const SpacetimePoint> points,
              std::span<const std::size_t> idx);

}  // namespace stlur
