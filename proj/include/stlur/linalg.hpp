#pragma once

#include "stlur/common.hpp"

namespace stlur {

inline constexpr double kInitialJitter = 1e-8;
inline constexpr int kJitterEscalations = 3;

/// Cholesky factor of a symmetric positive (semi)definite matrix. When the
/// plain factorization fails or a pivot is numerically zero, 1e-8 is added to
/// the diagonal and then escalated ×10 up to three times before giving up.
class JitteredCholesky {
 public:
  explicit JitteredCholesky(const Mat& a);

  /// L⁻¹ b
  Vec half_solve(const Vec& b) const;
  Mat half_solve(const Mat& b) const;
  /// A⁻¹ b
  Vec solve(const Vec& b) const;
  double log_det() const;
  Mat matrix_l() const { return llt_.matrixL(); }
  double jitter() const { return jitter_; }
  Eigen::Index size() const { return llt_.matrixLLT().rows(); }

 private:
  Eigen::LLT<Mat> llt_;
  double jitter_ = 0.0;
};

}  // namespace stlur
