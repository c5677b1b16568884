#pragma once

#include "stlur/common.hpp"
#include "stlur/ingest.hpp"

#include <span>
#include <vector>

namespace stlur {

struct Standardization {
  Vec means;
  Vec sds;

  /// (row - means) / sds, column-wise.
  Mat apply(const Mat& table) const;
  Vec apply(std::span<const double> row) const;
};

/// Column means and n-1 standard deviations. Rejects constant columns.
Standardization fit_standardization(const Mat& table);

struct PcaBasis {
  Mat loadings;   ///< columns × k_computed, orthonormal columns
  Vec explained;  ///< variance fraction per component, non-increasing
  int k_computed = 13;
  int k_retained = 7;
};

/// Eigendecomposition of the sample covariance of an already standardized
/// table. Each loading is signed so its largest-magnitude entry is positive.
PcaBasis fit_pca(const Mat& standardized, int k_computed);

struct PcSelection {
  int k_retained = 7;
  /// t-statistic of each PC slope in a least-squares fit of y on an
  /// intercept plus all computed PCs.
  std::vector<double> t_stats;
};

PcSelection select_pcs(const Mat& scores, const Vec& y, int k_retained);

/// Number of mean-design columns for K retained PCs:
/// intercept, K PCs, 4 harmonics and all K×4 interactions.
constexpr int design_size(int k_retained) { return 1 + k_retained + 4 + 4 * k_retained; }

struct DesignRow {
  Vec x_mean;
  std::vector<double> x_cov;
};

/// Mean design for PC scores `pcs` (already truncated to K) at local hour h.
DesignRow build_design_row(std::span<const double> pcs, double local_hour);

/// Segment → PC scores → design rows, with the fitted transform frozen.
class Featurizer {
 public:
  Featurizer(Standardization standardization, PcaBasis basis, double utc_offset_hours);

  /// Scores on the retained components.
  std::vector<double> scores(const Segment& segment) const;
  DesignRow row(const Segment& segment, Timestamp time) const;
  int design_size() const { return stlur::design_size(basis_.k_retained); }
  const Standardization& standardization() const { return standardization_; }
  const PcaBasis& basis() const { return basis_; }
  double utc_offset_hours() const { return utc_offset_hours_; }

 private:
  Standardization standardization_;
  PcaBasis basis_;
  double utc_offset_hours_;
};

/// Rows = segments, columns = the 28 covariates.
Mat covariate_table(std::span<const Segment> segments);

}  // namespace stlur
