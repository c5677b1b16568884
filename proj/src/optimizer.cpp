#include "stlur/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace stlur {

SimplexResult nelder_mead(const std::function<double(const Vec&)>& objective, const Vec& start,
                          const SimplexOptions& options) {
  const Eigen::Index dim = start.size();
  SimplexResult result;
  auto eval = [&](const Vec& x) {
    ++result.evaluations;
    const double v = objective(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<Vec> simplex(static_cast<std::size_t>(dim + 1), start);
  std::vector<double> values(static_cast<std::size_t>(dim + 1));
  for (Eigen::Index k = 0; k < dim; ++k) simplex[static_cast<std::size_t>(k + 1)][k] += options.initial_step;
  for (std::size_t k = 0; k < simplex.size(); ++k) values[k] = eval(simplex[k]);

  std::vector<std::size_t> order(simplex.size());
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<Vec> s2;
    std::vector<double> v2;
    for (std::size_t k : order) {
      s2.push_back(simplex[k]);
      v2.push_back(values[k]);
    }
    simplex = std::move(s2);
    values = std::move(v2);
  };

  sort_simplex();
  for (int iter = 0; iter < options.max_iters; ++iter) {
    const double best = values.front();
    const double worst = values.back();
    double size = 0.0;
    for (std::size_t k = 1; k < simplex.size(); ++k) size = std::max(size, (simplex[k] - simplex[0]).cwiseAbs().maxCoeff());
    if (std::isfinite(worst) && worst - best <= options.rel_tol * (std::abs(best) + options.rel_tol) &&
        size <= std::sqrt(options.rel_tol)) {
      result.converged = true;
      break;
    }
    ++result.iterations;

    Vec centroid = Vec::Zero(dim);
    for (std::size_t k = 0; k + 1 < simplex.size(); ++k) centroid += simplex[k];
    centroid /= static_cast<double>(dim);
    const Vec& worst_x = simplex.back();

    const Vec reflected = centroid + (centroid - worst_x);
    const double fr = eval(reflected);
    if (fr < values.front()) {
      const Vec expanded = centroid + 2.0 * (centroid - worst_x);
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex.back() = expanded;
        values.back() = fe;
      } else {
        simplex.back() = reflected;
        values.back() = fr;
      }
    } else if (fr < values[values.size() - 2]) {
      simplex.back() = reflected;
      values.back() = fr;
    } else {
      const bool outside = fr < values.back();
      const Vec contracted = outside ? Vec(centroid + 0.5 * (reflected - centroid)) : Vec(centroid + 0.5 * (worst_x - centroid));
      const double fc = eval(contracted);
      if (fc < std::min(fr, values.back())) {
        simplex.back() = contracted;
        values.back() = fc;
      } else {
        for (std::size_t k = 1; k < simplex.size(); ++k) {
          simplex[k] = simplex[0] + 0.5 * (simplex[k] - simplex[0]);
          values[k] = eval(simplex[k]);
        }
      }
    }
    sort_simplex();
    result.best_trace.push_back(values.front());
  }
  result.x = simplex.front();
  result.value = values.front();
  return result;
}

}  // namespace stlur
