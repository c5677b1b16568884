#pragma once

#include "stlur/common.hpp"

#include <functional>
#include <vector>

namespace stlur {

struct SimplexOptions {
  int max_iters = 500;
  /// Converged when the spread of vertex values is below
  /// rel_tol * (|best| + rel_tol) and the simplex has collapsed likewise.
  double rel_tol = 1e-6;
  double initial_step = 0.5;
};

struct SimplexResult {
  Vec x;
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
  /// Best value after each iteration; non-increasing.
  std::vector<double> best_trace;
};

/// Nelder-Mead minimization with the standard coefficients (1, 2, 0.5, 0.5).
/// Non-finite objective values are treated as +inf.
SimplexResult nelder_mead(const std::function<double(const Vec&)>& objective, const Vec& start,
                          const SimplexOptions& options = {});

}  // namespace stlur
