#include "stlur/features.hpp"

#include <cmath>
#include <numbers>

namespace stlur {

Mat Standardization::apply(const Mat& table) const {
  if (table.cols() != means.size()) throw Error("standardization expects " + std::to_string(means.size()) + " columns");
  Mat out = table.rowwise() - means.transpose();
  return out.array().rowwise() / sds.transpose().array();
}

Vec Standardization::apply(std::span<const double> row) const {
  if (static_cast<Eigen::Index>(row.size()) != means.size()) throw Error("standardization: wrong covariate count");
  Vec out(means.size());
  for (Eigen::Index c = 0; c < means.size(); ++c) out[c] = (row[static_cast<std::size_t>(c)] - means[c]) / sds[c];
  return out;
}

Standardization fit_standardization(const Mat& table) {
  const Eigen::Index n = table.rows();
  if (n < 2) throw Error("standardization needs at least 2 rows");
  Standardization s;
  s.means = table.colwise().mean().transpose();
  s.sds.resize(table.cols());
  for (Eigen::Index c = 0; c < table.cols(); ++c) {
    const double ss = (table.col(c).array() - s.means[c]).square().sum();
    s.sds[c] = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(s.sds[c] > 0.0)) throw Error("covariate column " + std::to_string(c + 1) + " is constant");
  }
  return s;
}

PcaBasis fit_pca(const Mat& standardized, int k_computed) {
  const Eigen::Index p = standardized.cols();
  if (k_computed < 1 || k_computed > p) {
    throw Error("k_computed=" + std::to_string(k_computed) + " outside [1, " + std::to_string(p) + "]");
  }
  if (standardized.rows() < 2) throw Error("PCA needs at least 2 rows");
  const Mat centered = standardized.rowwise() - standardized.colwise().mean();
  const Mat cov = (centered.transpose() * centered) / static_cast<double>(standardized.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("PCA eigendecomposition failed");

  const double trace = cov.trace();
  PcaBasis basis;
  basis.k_computed = k_computed;
  basis.k_retained = std::min(basis.k_retained, k_computed);
  basis.loadings.resize(p, k_computed);
  basis.explained.resize(k_computed);
  for (int k = 0; k < k_computed; ++k) {
    const Eigen::Index src = p - 1 - k;  // eigenvalues come back ascending
    Vec v = eig.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    basis.loadings.col(k) = v;
    basis.explained[k] = std::max(0.0, eig.eigenvalues()[src]) / trace;
  }
  return basis;
}

PcSelection select_pcs(const Mat& scores, const Vec& y, int k_retained) {
  const Eigen::Index n = scores.rows();
  const Eigen::Index k = scores.cols();
  if (y.size() != n) throw Error("select_pcs: scores and y have different lengths");
  if (k_retained < 1 || k_retained > k) throw Error("select_pcs: k_retained outside [1, " + std::to_string(k) + "]");
  if (n <= k + 1) throw Error("select_pcs: " + std::to_string(n) + " observations for " + std::to_string(k) + " PCs");

  Mat X(n, k + 1);
  X.col(0).setOnes();
  X.rightCols(k) = scores;
  Eigen::ColPivHouseholderQR<Mat> qr(X);
  if (qr.rank() < X.cols()) throw Error("select_pcs: PC scores are rank deficient");
  const Vec beta = qr.solve(y);
  const Vec resid = y - X * beta;
  const double s2 = resid.squaredNorm() / static_cast<double>(n - k - 1);
  const Mat xtx_inv = (X.transpose() * X).inverse();

  PcSelection sel;
  sel.k_retained = k_retained;
  for (Eigen::Index j = 1; j <= k; ++j) sel.t_stats.push_back(beta[j] / std::sqrt(s2 * xtx_inv(j, j)));
  return sel;
}

DesignRow build_design_row(std::span<const double> pcs, double local_hour) {
  const int k = static_cast<int>(pcs.size());
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double harmonics[4] = {std::cos(two_pi * local_hour / 24.0), std::sin(two_pi * local_hour / 24.0),
                               std::cos(two_pi * local_hour / 12.0), std::sin(two_pi * local_hour / 12.0)};
  DesignRow row;
  row.x_mean.resize(design_size(k));
  Eigen::Index at = 0;
  row.x_mean[at++] = 1.0;
  for (double pc : pcs) row.x_mean[at++] = pc;
  for (double h : harmonics) row.x_mean[at++] = h;
  for (double pc : pcs) {
    for (double h : harmonics) row.x_mean[at++] = pc * h;
  }
  row.x_cov.assign(pcs.begin(), pcs.end());
  return row;
}

Featurizer::Featurizer(Standardization standardization, PcaBasis basis, double utc_offset_hours)
    : standardization_(std::move(standardization)), basis_(std::move(basis)), utc_offset_hours_(utc_offset_hours) {
  if (basis_.loadings.rows() != standardization_.means.size()) throw Error("PCA basis does not match standardization");
  if (basis_.k_retained < 1 || basis_.k_retained > basis_.k_computed) throw Error("invalid k_retained");
}

std::vector<double> Featurizer::scores(const Segment& segment) const {
  const Vec z = standardization_.apply(segment.covariates);
  const Vec s = basis_.loadings.leftCols(basis_.k_retained).transpose() * z;
  return {s.data(), s.data() + s.size()};
}

DesignRow Featurizer::row(const Segment& segment, Timestamp time) const {
  const auto pcs = scores(segment);
  return build_design_row(pcs, local_hour_of_day(time, utc_offset_hours_));
}

Mat covariate_table(std::span<const Segment> segments) {
  Mat table(static_cast<Eigen::Index>(segments.size()), static_cast<Eigen::Index>(kCovariateCount));
  for (std::size_t i = 0; i < segments.size(); ++i) {
    for (std::size_t c = 0; c < kCovariateCount; ++c) table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = segments[i].covariates[c];
  }
  return table;
}

}  // namespace stlur
