#include "stlur/covariance.hpp"

#include <cmath>
#include <string>

namespace stlur {

namespace {

bool finite_point(const SpacetimePoint& p) {
  if (!std::isfinite(p.planar.east_km) || !std::isfinite(p.planar.north_km) || !std::isfinite(p.time_h)) return false;
  for (double x : p.x_cov) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

bool same_point(const SpacetimePoint& a, const SpacetimePoint& b) {
  return a.planar.east_km == b.planar.east_km && a.planar.north_km == b.planar.north_km && a.time_h == b.time_h &&
         a.x_cov == b.x_cov;
}

/// Squared scaled distance in the (space, time, covariate) metric.
double scaled_distance2(const CovParams& p, const SpacetimePoint& a, const SpacetimePoint& b) {
  const double de = a.planar.east_km - b.planar.east_km;
  const double dn = a.planar.north_km - b.planar.north_km;
  double r2 = (de * de + dn * dn) / (p.theta_s * p.theta_s);
  if (p.kind == CovKind::S) return r2;
  const double dt = a.time_h - b.time_h;
  r2 += dt * dt / (p.theta_t * p.theta_t);
  if (p.kind == CovKind::ST) return r2;
  if (a.x_cov.size() != b.x_cov.size()) throw Error("covariate vectors differ in length");
  double dx2 = 0.0;
  for (std::size_t k = 0; k < a.x_cov.size(); ++k) {
    const double d = a.x_cov[k] - b.x_cov[k];
    dx2 += d * d;
  }
  return r2 + dx2 / (p.theta_x * p.theta_x);
}

}  // namespace

std::string_view to_string(CovKind kind) {
  switch (kind) {
    case CovKind::XOnly: return "XONLY";
    case CovKind::S: return "S";
    case CovKind::ST: return "ST";
    case CovKind::STX: return "STX";
  }
  return "?";
}

CovKind parse_cov_kind(std::string_view text) {
  std::string upper(text);
  for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper == "XONLY" || upper == "X") return CovKind::XOnly;
  if (upper == "S") return CovKind::S;
  if (upper == "ST") return CovKind::ST;
  if (upper == "STX") return CovKind::STX;
  throw Error("unknown model kind '" + std::string(text) + "'");
}

void CovParams::validate() const {
  if (!(sigma2 >= 0.0) || !(tau2 >= 0.0) || !std::isfinite(sigma2) || !std::isfinite(tau2)) {
    throw Error("covariance variances must be finite and non-negative");
  }
  const bool need_s = kind != CovKind::XOnly;
  const bool need_t = kind == CovKind::ST || kind == CovKind::STX;
  const bool need_x = kind == CovKind::STX;
  if ((need_s && !(theta_s > 0.0)) || (need_t && !(theta_t > 0.0)) || (need_x && !(theta_x > 0.0))) {
    throw Error("active range parameters must be positive");
  }
}

double cov(const CovParams& params, const SpacetimePoint& a, const SpacetimePoint& b) {
  if (!finite_point(a) || !finite_point(b)) throw Error("non-finite covariance input");
  if (params.kind == CovKind::XOnly) return same_point(a, b) ? params.sigma2 : 0.0;
  return params.sigma2 * std::exp(-std::sqrt(scaled_distance2(params, a, b)));
}

Mat cov_matrix(const CovParams& params, std::span<const SpacetimePoint> points, bool add_nugget) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Mat out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = cov(params, points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(i)]) + (add_nugget ? params.tau2 : 0.0);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double c = cov(params, points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(j)]);
      out(i, j) = c;
      out(j, i) = c;
    }
  }
  return out;
}

Mat cov_matrix(const CovParams& params, std::span<const SpacetimePoint> points, std::span<const std::size_t> idx,
               bool add_nugget) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Mat out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& pi = points[idx[static_cast<std::size_t>(i)]];
    out(i, i) = cov(params, pi, pi) + (add_nugget ? params.tau2 : 0.0);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double c = cov(params, pi, points[idx[static_cast<std::size_t>(j)]]);
      out(i, j) = c;
      out(j, i) = c;
    }
  }
  return out;
}

Vec cross_cov(const CovParams& params, const SpacetimePoint& target, std::span<const SpacetimePoint> points) {
  Vec out(static_cast<Eigen::Index>(points.size()));
  for (std::size_t j = 0; j < points.size(); ++j) out[static_cast<Eigen::Index>(j)] = cov(params, target, points[j]);
  return out;
}

Vec cross_cov(const CovParams& params, const SpacetimePoint& target, std::span<const SpacetimePoint> points,
              std::span<const std::size_t> idx) {
  Vec out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out[static_cast<Eigen::Index>(j)] = cov(params, target, points[idx[j]]);
  return out;
}

}  // namespace stlur
