#include "stlur/features.hpp"
#include "stlur/rng.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace stlur;

namespace {

Mat random_table(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  Rng rng(seed);
  Mat latent(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) latent(i, j) = rng.normal();
  }
  Mat mix(3, p);
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) mix(i, j) = rng.normal();
  }
  Mat t = latent * mix;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) t(i, j) += 0.3 * rng.normal() + 5.0 * static_cast<double>(j);
  }
  return t;
}

// Leading eigenpairs by power iteration with deflation.
std::vector<std::pair<double, Vec>> power_eigen(Mat a, int k) {
  std::vector<std::pair<double, Vec>> out;
  for (int c = 0; c < k; ++c) {
    Vec v = Vec::Ones(a.rows()) / std::sqrt(static_cast<double>(a.rows()));
    v[c % a.rows()] += 0.5;
    double lambda = 0.0;
    for (int it = 0; it < 20000; ++it) {
      Vec w = a * v;
      const double nl = w.norm();
      w /= nl;
      if ((w - v).norm() < 1e-15 || (w + v).norm() < 1e-15) {
        v = w;
        lambda = nl;
        break;
      }
      v = w;
      lambda = nl;
    }
    lambda = v.dot(a * v);
    out.emplace_back(lambda, v);
    a -= lambda * v * v.transpose();
  }
  return out;
}

}  // namespace

TEST(Standardization, TwoPassOracle) {
  const Mat t = random_table(40, 6, 1);
  const auto s = fit_standardization(t);
  for (Eigen::Index j = 0; j < 6; ++j) {
    double mean = 0;
    for (Eigen::Index i = 0; i < 40; ++i) mean += t(i, j);
    mean /= 40;
    double ss = 0;
    for (Eigen::Index i = 0; i < 40; ++i) ss += (t(i, j) - mean) * (t(i, j) - mean);
    EXPECT_NEAR(s.means[j], mean, 1e-12 * std::max(1.0, std::abs(mean)));
    EXPECT_NEAR(s.sds[j], std::sqrt(ss / 39), 1e-12);
  }
  const Mat z = s.apply(t);
  EXPECT_NEAR(z.col(2).mean(), 0.0, 1e-12);
  EXPECT_NEAR(std::sqrt(z.col(2).squaredNorm() / 39), 1.0, 1e-12);
}

TEST(Standardization, ConstantColumnRejected) {
  Mat t = random_table(10, 4, 2);
  t.col(1).setConstant(3.0);
  EXPECT_THROW(fit_standardization(t), Error);
}

TEST(Pca, OrthonormalAndOrdered) {
  const Mat t = random_table(200, 28, 3);
  const auto s = fit_standardization(t);
  const auto basis = fit_pca(s.apply(t), 13);
  ASSERT_EQ(basis.loadings.rows(), 28);
  ASSERT_EQ(basis.loadings.cols(), 13);
  const Mat gram = basis.loadings.transpose() * basis.loadings;
  EXPECT_LT((gram - Mat::Identity(13, 13)).cwiseAbs().maxCoeff(), 1e-8);
  for (Eigen::Index k = 1; k < 13; ++k) EXPECT_LE(basis.explained[k], basis.explained[k - 1]);
  EXPECT_EQ(basis.k_retained, 7);
  for (Eigen::Index k = 0; k < 13; ++k) {
    Eigen::Index at;
    basis.loadings.col(k).cwiseAbs().maxCoeff(&at);
    EXPECT_GT(basis.loadings(at, k), 0.0);
  }
}

TEST(Pca, SixBySixMatchesPowerIteration) {
  const Mat t = random_table(60, 6, 4);
  const Mat z = fit_standardization(t).apply(t);
  const auto basis = fit_pca(z, 3);
  const Mat cov = z.transpose() * z / 59.0;
  const auto ref = power_eigen(cov, 3);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(basis.explained[k], ref[static_cast<std::size_t>(k)].first / cov.trace(), 1e-9);
    const Vec a = basis.loadings.col(k);
    const Vec& b = ref[static_cast<std::size_t>(k)].second;
    EXPECT_NEAR(std::abs(a.dot(b)), 1.0, 1e-9);
  }
}

TEST(Pca, RejectsBadComponentCount) {
  const Mat z = fit_standardization(random_table(30, 5, 5)).apply(random_table(30, 5, 5));
  EXPECT_THROW(fit_pca(z, 0), Error);
  EXPECT_THROW(fit_pca(z, 6), Error);
}

TEST(SelectPcs, DefaultsAndTStatOracle) {
  Rng rng(6);
  const Eigen::Index n = 120, k = 13;
  Mat scores(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) scores(i, j) = rng.normal();
  }
  Vec y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = 1.0 + 2.0 * scores(i, 0) - 0.5 * scores(i, 3) + rng.normal();
  const auto sel = select_pcs(scores, y, 7);
  EXPECT_EQ(sel.k_retained, 7);
  ASSERT_EQ(sel.t_stats.size(), 13u);

  Mat X(n, k + 1);
  X.col(0).setOnes();
  X.rightCols(k) = scores;
  const Mat xtx = X.transpose() * X;
  const Mat inv = xtx.llt().solve(Mat::Identity(k + 1, k + 1));
  const Vec beta = inv * X.transpose() * y;
  const double s2 = (y - X * beta).squaredNorm() / static_cast<double>(n - k - 1);
  for (Eigen::Index j = 0; j < k; ++j) {
    EXPECT_NEAR(sel.t_stats[static_cast<std::size_t>(j)], beta[j + 1] / std::sqrt(s2 * inv(j + 1, j + 1)), 1e-8);
  }
  EXPECT_GT(std::abs(sel.t_stats[0]), 10.0);
  EXPECT_THROW(select_pcs(scores.topRows(10), y.head(10), 7), Error);
}

TEST(Design, LengthAndLayout) {
  EXPECT_EQ(design_size(7), 40);
  const std::vector<double> pcs{0.5, -1.0};
  const auto row = build_design_row(pcs, 6.0);
  ASSERT_EQ(row.x_mean.size(), design_size(2));
  EXPECT_EQ(row.x_mean[0], 1.0);
  EXPECT_EQ(row.x_mean[1], 0.5);
  EXPECT_EQ(row.x_mean[2], -1.0);
  EXPECT_NEAR(row.x_mean[3], 0.0, 1e-15);  // cos(2π·6/24)
  EXPECT_NEAR(row.x_mean[4], 1.0, 1e-15);  // sin(2π·6/24)
  EXPECT_NEAR(row.x_mean[5], -1.0, 1e-15); // cos(2π·6/12)
  EXPECT_NEAR(row.x_mean[6], 0.0, 1e-15);
  EXPECT_NEAR(row.x_mean[8], 0.5, 1e-15);  // pc1 × sin24
  EXPECT_NEAR(row.x_mean[13], 1.0, 1e-15); // pc2 × cos12
  EXPECT_EQ(row.x_cov, pcs);
}

TEST(Featurizer, UsesLocalClock) {
  std::vector<Segment> segs;
  for (int k = 0; k < 40; ++k) segs.push_back(fx::make_segment(k + 1, {0.1 * k, 0.05 * k}, 8));
  const Mat table = covariate_table(segs);
  const auto s = fit_standardization(table);
  auto basis = fit_pca(s.apply(table), 13);
  Featurizer f(s, basis, -8.0);
  EXPECT_EQ(f.design_size(), 40);
  // 21:00Z is 13:00 local.
  const auto row = f.row(segs[3], 1465246800);
  const auto ref = build_design_row(f.scores(segs[3]), 13.0);
  EXPECT_LT((row.x_mean - ref.x_mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(f.scores(segs[3]).size(), 7u);
}
