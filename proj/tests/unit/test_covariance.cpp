#include "stlur/covariance.hpp"
#include "stlur/rng.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

using namespace stlur;

namespace {

SpacetimePoint pt(double e, double n, double t, std::vector<double> x = {0.0, 0.0}) { return {{e, n}, t, std::move(x)}; }

CovParams params(CovKind kind) { return {kind, 2.0, 0.3, 1.5, 2.5, 0.8}; }

std::vector<SpacetimePoint> random_points(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SpacetimePoint> pts;
  for (int i = 0; i < n; ++i) pts.push_back(pt(rng.uniform() * 5, rng.uniform() * 5, rng.uniform() * 4, {rng.normal(), rng.normal()}));
  return pts;
}

}  // namespace

TEST(Cov, ZeroDistanceIsSill) {
  for (CovKind k : {CovKind::XOnly, CovKind::S, CovKind::ST, CovKind::STX}) {
    auto p = params(k);
    EXPECT_DOUBLE_EQ(cov(p, pt(1, 2, 3), pt(1, 2, 3)), 2.0);
  }
}

TEST(Cov, Formulas) {
  CovParams st{CovKind::ST, 1.0, 0.0, 1.0, 1.0, 1.0};
  EXPECT_NEAR(cov(st, pt(0, 0, 0), pt(3, 0, 4)), std::exp(-5.0), 1e-15);
  CovParams s{CovKind::S, 1.5, 0.0, 2.0, 1.0, 1.0};
  EXPECT_NEAR(cov(s, pt(0, 0, 0), pt(0, 3, 7)), 1.5 * std::exp(-1.5), 1e-15);
  CovParams stx{CovKind::STX, 1.0, 0.0, 1.0, 2.0, 0.5};
  const double d = std::sqrt(1.0 + 1.0 + 4.0 * 2.0);
  EXPECT_NEAR(cov(stx, pt(0, 0, 0, {0, 0}), pt(1, 0, 2, {1, 1})), std::exp(-d), 1e-15);
  CovParams x{CovKind::XOnly, 1.0, 0.5, 1.0, 1.0, 1.0};
  EXPECT_EQ(cov(x, pt(0, 0, 0), pt(0, 0, 1e-9)), 0.0);
}

TEST(Cov, LimitsBetweenKinds) {
  CovParams st{CovKind::ST, 1.3, 0.0, 1.2, 0.7, 1.0};
  CovParams stx = st;
  stx.kind = CovKind::STX;
  stx.theta_x = 1e9;
  CovParams s = st;
  s.kind = CovKind::S;
  const auto pts = random_points(10, 3);
  for (const auto& a : pts) {
    for (const auto& b : pts) {
      EXPECT_NEAR(cov(st, a, b), cov(stx, a, b), 1e-9);
      auto b0 = b;
      b0.time_h = a.time_h;
      EXPECT_NEAR(cov(st, a, b0), cov(s, a, b), 1e-15);
    }
  }
}

TEST(Cov, SymmetricBoundedMonotone) {
  const auto p = params(CovKind::STX);
  const auto pts = random_points(12, 4);
  for (const auto& a : pts) {
    for (const auto& b : pts) {
      EXPECT_EQ(cov(p, a, b), cov(p, b, a));
      EXPECT_LE(cov(p, a, b), p.sigma2);
    }
  }
  double prev = cov(p, pt(0, 0, 0), pt(0, 0, 0));
  for (double d = 0.1; d < 5; d += 0.1) {
    const double c = cov(p, pt(0, 0, 0), pt(d, 0, 0.3));
    EXPECT_LE(c, prev);
    prev = c;
  }
}

TEST(Cov, NonFiniteRejected) {
  const auto p = params(CovKind::ST);
  EXPECT_THROW(cov(p, pt(NAN, 0, 0), pt(0, 0, 0)), Error);
  CovParams bad = p;
  bad.sigma2 = -1;
  EXPECT_THROW(bad.validate(), Error);
  bad = p;
  bad.theta_t = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = p;
  bad.kind = CovKind::S;
  bad.theta_t = 0;
  EXPECT_NO_THROW(bad.validate());
}

TEST(CovMatrix, NuggetSymmetryAndPsd) {
  const auto p = params(CovKind::ST);
  const auto one = random_points(1, 1);
  EXPECT_DOUBLE_EQ(cov_matrix(p, one, true)(0, 0), 2.3);
  const auto five = random_points(5, 2);
  const Mat m = cov_matrix(p, five, true);
  EXPECT_TRUE((m.array() == m.transpose().array()).all());
  for (CovKind k : {CovKind::XOnly, CovKind::S, CovKind::ST, CovKind::STX}) {
    const Mat c = cov_matrix(params(k), random_points(20, 5), false);
    Eigen::SelfAdjointEigenSolver<Mat> es(c);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(CrossCov, ConsistentWithMatrix) {
  const auto p = params(CovKind::STX);
  auto pts = random_points(8, 6);
  const Mat m = cov_matrix(p, pts, false);
  const std::span<const SpacetimePoint> rest(pts.data() + 1, pts.size() - 1);
  const Vec c = cross_cov(p, pts[0], rest);
  for (Eigen::Index j = 0; j < c.size(); ++j) EXPECT_EQ(c[j], m(0, j + 1));
  const Vec self = cross_cov(p, pts[3], pts);
  EXPECT_EQ(self[3], p.sigma2);
  const std::vector<SpacetimePoint> far{pt(1e6, 0, 0, {0, 0})};
  EXPECT_LT(cross_cov(p, pts[0], far)[0], 1e-300);
  const std::vector<std::size_t> idx{4, 1};
  const Vec sub = cross_cov(p, pts[0], pts, idx);
  EXPECT_EQ(sub[0], m(0, 4));
  EXPECT_EQ(sub[1], m(0, 1));
  const Mat subm = cov_matrix(p, pts, idx, true);
  EXPECT_EQ(subm(0, 1), m(4, 1));
  EXPECT_EQ(subm(1, 1), m(1, 1) + p.tau2);
}

TEST(CovKindNames, RoundTrip) {
  for (CovKind k : {CovKind::XOnly, CovKind::S, CovKind::ST, CovKind::STX}) EXPECT_EQ(parse_cov_kind(to_string(k)), k);
  EXPECT_THROW(parse_cov_kind("matern"), Error);
}
