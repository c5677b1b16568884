#include "stlur/linalg.hpp"

#include <cmath>

namespace stlur {

namespace {

// Relative pivot size below which a factor is treated as singular.
constexpr double kPivotFloor = 1e-13;

bool usable(const Eigen::LLT<Mat>& llt, double scale) {
  if (llt.info() != Eigen::Success) return false;
  const Vec d = llt.matrixLLT().diagonal();
  return d.size() == 0 || (d.array().square().minCoeff() > kPivotFloor * scale && d.allFinite());
}

}  // namespace

JitteredCholesky::JitteredCholesky(const Mat& a) {
  if (a.rows() != a.cols()) throw Error("Cholesky of a non-square matrix");
  if (a.rows() == 0) return;
  const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  llt_.compute(a);
  if (usable(llt_, scale)) return;
  double jitter = kInitialJitter;
  for (int attempt = 0; attempt <= kJitterEscalations; ++attempt, jitter *= 10.0) {
    Mat shifted = a;
    shifted.diagonal().array() += jitter;
    llt_.compute(shifted);
    if (usable(llt_, scale)) {
      jitter_ = jitter;
      return;
    }
  }
  throw Error("covariance factorization failed after jitter " + format_double(jitter / 10.0));
}

Vec JitteredCholesky::half_solve(const Vec& b) const {
  if (b.size() == 0) return b;
  return llt_.matrixL().solve(b);
}

Mat JitteredCholesky::half_solve(const Mat& b) const {
  if (b.rows() == 0) return b;
  return llt_.matrixL().solve(b);
}

Vec JitteredCholesky::solve(const Vec& b) const {
  if (b.size() == 0) return b;
  return llt_.solve(b);
}

double JitteredCholesky::log_det() const {
  if (size() == 0) return 0.0;
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

}  // namespace stlur
