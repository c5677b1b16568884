#include "stlur/ingest.hpp"
#include "stlur/rng.hpp"
#include "stlur/synth.hpp"
#include "stlur/timeutil.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace stlur;

TEST(Synth, RandomWalkStaysOnGrid) {
  GridSpec grid;
  Rng rng(4);
  const auto walk = grid_random_walk(rng, grid, 25.0, 12.0, 1.0, 10.0);
  ASSERT_EQ(walk.size(), 360u);
  const double half = grid.extent_km / 2.0;
  for (std::size_t i = 0; i < walk.size(); ++i) {
    const auto& p = walk[i].planar;
    const double fx = std::fmod(p.east_km + half, grid.spacing_km), fy = std::fmod(p.north_km + half, grid.spacing_km);
    const bool on_line = std::min(fx, grid.spacing_km - fx) < 1e-9 || std::min(fy, grid.spacing_km - fy) < 1e-9;
    EXPECT_TRUE(on_line);
    EXPECT_LE(std::abs(p.east_km), half + 1e-9);
    EXPECT_LE(std::abs(p.north_km), half + 1e-9);
    if (i > 0) {
      EXPECT_NEAR(walk[i].time_h - walk[i - 1].time_h, 10.0 / 3600.0, 1e-12);
      const double step = std::abs(p.east_km - walk[i - 1].planar.east_km) + std::abs(p.north_km - walk[i - 1].planar.north_km);
      EXPECT_NEAR(step, 25.0 * 10.0 / 3600.0, 1e-9);
    }
  }
}

TEST(Synth, DenseDrawCovarianceMatchesModel) {
  const CovParams p{CovKind::S, 1.0, 0.0, 1.0, 1.0, 1.0};
  const std::vector<SpacetimePoint> pts{{{0, 0}, 0, {}}, {{0.5, 0}, 0, {}}};
  Rng rng(5);
  double s00 = 0, s01 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Vec z = simulate_dense(p, pts, rng, false);
    s00 += z[0] * z[0] / n;
    s01 += z[0] * z[1] / n;
  }
  EXPECT_NEAR(s00, 1.0, 0.05);
  EXPECT_NEAR(s01, std::exp(-0.5), 0.05);
}

TEST(Synth, SequentialWithFullNeighborsEqualsDenseInDistribution) {
  const CovParams p{CovKind::ST, 1.0, 0.2, 1.0, 1.0, 1.0};
  const auto pts = fx::route_points(4, 1);
  Rng rng(6);
  double s03 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Vec z = simulate_sequential(p, pts, 3, rng, false);
    s03 += z[0] * z[3] / n;
  }
  EXPECT_NEAR(s03, cov(p, pts[0], pts[3]), 0.05);
}

TEST(Synth, GeneratorIsDeterministicAndPlausible) {
  SynthConfig cfg;
  cfg.days = 1;
  cfg.cars = 1;
  cfg.drive_start_h = 12.0;
  cfg.drive_end_h = 12.5;
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  ASSERT_EQ(a.samples.size(), 1800u);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].no2_ppb, b.samples[i].no2_ppb);
    EXPECT_GT(a.samples[i].no2_ppb, 0.0);
  }
  EXPECT_EQ(local_seconds_of_day(a.samples.front().time, -8.0), 12 * 3600);
  EXPECT_FALSE(a.centerlines.empty());
  EXPECT_EQ(a.covariate_points.size(), 31u * 31u);
  cfg.seed = 2;
  const auto c = generate_synthetic(cfg);
  EXPECT_NE(c.samples[100].no2_ppb, a.samples[100].no2_ppb);
}
