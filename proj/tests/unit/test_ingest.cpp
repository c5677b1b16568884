#include "stlur/ingest.hpp"
#include "stlur/rng.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

using namespace stlur;

namespace {

const GeoPoint kOrigin{37.8, -122.27};

GeoPoint offset_m(double north_m, double east_m) { return unproject({east_m / 1000.0, north_m / 1000.0}, kOrigin); }

// Point at arc length s along a planar polyline, walked vertex by vertex.
PlanarPoint walk(const std::vector<PlanarPoint>& v, double s) {
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const double len = std::hypot(v[i + 1].east_km - v[i].east_km, v[i + 1].north_km - v[i].north_km);
    if (s <= len) {
      const double f = s / len;
      return {v[i].east_km + f * (v[i + 1].east_km - v[i].east_km), v[i].north_km + f * (v[i + 1].north_km - v[i].north_km)};
    }
    s -= len;
  }
  return v.back();
}

Observation obs_at(const std::string& car, Timestamp t, double y, std::int64_t seg = 1) {
  Observation o;
  o.car_id = car;
  o.time = t;
  o.y = y;
  o.segment_id = seg;
  o.planar = {static_cast<double>(seg), 0.0};
  return o;
}

double sort_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(Segmentize, StraightLineThreePieces) {
  const Centerline line{1, {offset_m(0, 0), offset_m(90, 0)}};
  const auto segs = segmentize_centerlines(std::span(&line, 1), 30.0);
  ASSERT_EQ(segs.size(), 3u);
  const double expected[] = {15, 45, 75};
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(segs[k].id, static_cast<std::int64_t>(k + 1));
    const auto p = project(segs[k].center, kOrigin);
    EXPECT_NEAR(p.north_km * 1000.0, expected[k], 1e-3);
    EXPECT_NEAR(p.east_km, 0.0, 1e-9);
  }
}

TEST(Segmentize, ShortLineGetsMidpoint) {
  const Centerline line{1, {offset_m(0, 0), offset_m(10, 0)}};
  const auto segs = segmentize_centerlines(std::span(&line, 1), 30.0);
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_NEAR(project(segs[0].center, kOrigin).north_km * 1000.0, 5.0, 1e-3);
}

TEST(Segmentize, LShapeMatchesArcLengthWalk) {
  const Centerline line{4, {offset_m(0, 0), offset_m(30, 0), offset_m(30, 30)}};
  const auto segs = segmentize_centerlines(std::span(&line, 1), 30.0);
  ASSERT_EQ(segs.size(), 2u);
  std::vector<PlanarPoint> v;
  for (const auto& g : line.vertices) v.push_back(project(g, kOrigin));
  for (std::size_t k = 0; k < 2; ++k) {
    const auto want = walk(v, 0.015 + 0.030 * static_cast<double>(k));
    const auto got = project(segs[k].center, kOrigin);
    EXPECT_NEAR(got.east_km, want.east_km, 1e-6);
    EXPECT_NEAR(got.north_km, want.north_km, 1e-6);
  }
}

TEST(Segmentize, Errors) {
  EXPECT_THROW(segmentize_centerlines({}, 30.0), Error);
  const Centerline line{1, {offset_m(0, 0), offset_m(90, 0)}};
  EXPECT_THROW(segmentize_centerlines(std::span(&line, 1), 0.0), Error);
  try {
    segmentize_centerlines({}, 30.0);
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no geometry"), std::string::npos);
  }
}

TEST(Snap, CenterAndTieRule) {
  std::vector<Segment> segs(2);
  segs[0].id = 7;
  segs[0].center = offset_m(0, 20);
  segs[1].id = 3;
  segs[1].center = offset_m(0, -20);
  assign_planar(segs, kOrigin);
  RawSample at7{"a", 0, segs[0].center, 10.0};
  RawSample mid{"a", 1, kOrigin, 10.0};
  const std::vector<RawSample> samples{at7, mid};
  const auto r = snap_to_segments(samples, segs, kOrigin);
  ASSERT_EQ(r.observations.size(), 2u);
  EXPECT_EQ(r.observations[0].segment_id, 7);
  EXPECT_EQ(r.observations[1].segment_id, 3);
  EXPECT_DOUBLE_EQ(r.observations[0].y, std::log(10.0));
}

TEST(Snap, MatchesExhaustiveScan) {
  Rng rng(17);
  std::vector<Segment> segs;
  for (int k = 0; k < 400; ++k) {
    Segment s;
    s.id = 1000 - k;
    s.center = offset_m(rng.uniform() * 2000 - 1000, rng.uniform() * 2000 - 1000);
    segs.push_back(s);
  }
  assign_planar(segs, kOrigin);
  std::vector<RawSample> samples;
  for (int k = 0; k < 1000; ++k) {
    samples.push_back({"c", k, offset_m(rng.uniform() * 2000 - 1000, rng.uniform() * 2000 - 1000), 5.0});
  }
  SnapOptions unbounded;
  unbounded.max_snap_km = std::numeric_limits<double>::infinity();
  SnapOptions bounded;
  bounded.max_snap_km = 0.05;
  const auto all = snap_to_segments(samples, segs, kOrigin, unbounded);
  const auto near = snap_to_segments(samples, segs, kOrigin, bounded);
  ASSERT_EQ(all.observations.size(), samples.size());
  std::size_t expected_dropped = 0, j = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto p = project(samples[i].position, kOrigin);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const double d = std::hypot(p.east_km - segs[s].planar.east_km, p.north_km - segs[s].planar.north_km);
      if (d < best_d - 1e-12 || (std::abs(d - best_d) <= 1e-12 && segs[s].id < segs[best].id)) {
        best = s;
        best_d = d;
      }
    }
    EXPECT_EQ(all.observations[i].segment_id, segs[best].id);
    if (best_d > 0.05) {
      ++expected_dropped;
    } else {
      EXPECT_EQ(near.observations[j++].segment_id, segs[best].id);
    }
  }
  EXPECT_EQ(near.dropped, expected_dropped);
  EXPECT_GT(expected_dropped, 0u);
}

TEST(Snap, DropsFarSamplesAndFloorsConcentrations) {
  std::vector<Segment> segs(1);
  segs[0].id = 1;
  segs[0].center = kOrigin;
  assign_planar(segs, kOrigin);
  const std::vector<RawSample> samples{{"a", 0, offset_m(150, 0), 3.0}, {"a", 1, offset_m(50, 0), -2.0}};
  const auto r = snap_to_segments(samples, segs, kOrigin);
  EXPECT_EQ(r.dropped, 1u);
  EXPECT_EQ(r.floored, 1u);
  ASSERT_EQ(r.observations.size(), 1u);
  EXPECT_DOUBLE_EQ(r.observations[0].y, std::log(0.1));
  EXPECT_THROW(snap_to_segments(samples, {}, kOrigin), Error);
}

TEST(Snap, Idempotent) {
  Rng rng(2);
  std::vector<Segment> segs;
  for (int k = 0; k < 50; ++k) {
    Segment s;
    s.id = k + 1;
    s.center = offset_m(rng.uniform() * 500, rng.uniform() * 500);
    segs.push_back(s);
  }
  assign_planar(segs, kOrigin);
  std::vector<RawSample> samples;
  for (const auto& s : segs) samples.push_back({"a", s.id, s.center, 1.0});
  const auto r = snap_to_segments(samples, segs, kOrigin);
  for (std::size_t k = 0; k < segs.size(); ++k) EXPECT_EQ(r.observations[k].segment_id, segs[k].id);
}

TEST(BlockMedian, Definitions) {
  const Timestamp t0 = 1465200000;
  std::vector<Observation> a{obs_at("a", t0, 2.0), obs_at("a", t0 + 1, 2.0)};
  EXPECT_DOUBLE_EQ(block_median(a, 60)[0].y, 2.0);
  std::vector<Observation> odd{obs_at("a", t0, 1), obs_at("a", t0 + 1, 100), obs_at("a", t0 + 2, 5)};
  EXPECT_DOUBLE_EQ(block_median(odd, 60)[0].y, 5.0);
  std::vector<Observation> even{obs_at("a", t0, 1), obs_at("a", t0 + 1, 5), obs_at("a", t0 + 2, 100), obs_at("a", t0 + 3, 9)};
  EXPECT_DOUBLE_EQ(block_median(even, 60)[0].y, 7.0);
}

TEST(BlockMedian, RepresentativeAndTime) {
  const Timestamp t0 = 1465200000;  // multiple of 60
  std::vector<Observation> v{obs_at("a", t0 + 29, 1, 11), obs_at("a", t0 + 31, 2, 12), obs_at("a", t0 + 50, 3, 13)};
  const auto out = block_median(v, 60);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].time, t0 + 30);
  EXPECT_EQ(out[0].segment_id, 11);  // equidistant: earlier wins
  EXPECT_EQ(out[0].block_seconds, 60);
  std::vector<Observation> w{obs_at("a", t0 + 10, 1, 11), obs_at("a", t0 + 31, 2, 12)};
  EXPECT_EQ(block_median(w, 60)[0].segment_id, 12);
}

TEST(BlockMedian, HourOfOneHertzMatchesSortMedian) {
  const Timestamp t0 = 1465200000;
  Rng rng(4);
  std::vector<Observation> v;
  for (int s = 0; s < 3600; ++s) v.push_back(obs_at("a", t0 + s, rng.normal(), 1 + s % 7));
  const auto out = block_median(v, 60);
  ASSERT_EQ(out.size(), 60u);
  for (std::size_t b = 0; b < 60; ++b) {
    std::vector<double> ys;
    for (std::size_t s = b * 60; s < (b + 1) * 60; ++s) ys.push_back(v[s].y);
    EXPECT_DOUBLE_EQ(out[b].y, sort_median(ys));
    EXPECT_EQ(out[b].time, t0 + static_cast<Timestamp>(b) * 60 + 30);
  }
}

TEST(BlockMedian, BlocksAreWallClockAlignedAndPerCar) {
  const Timestamp t0 = 1465200000;
  std::vector<Observation> v{obs_at("a", t0 + 10, 1), obs_at("a", t0 + 20, 3), obs_at("b", t0 + 14, 5), obs_at("b", t0 + 16, 7)};
  const auto out = block_median(v, 15);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out[0].car_id, "a");
  EXPECT_EQ(out[0].time, t0 + 7);
  EXPECT_EQ(out[1].time, t0 + 22);
  EXPECT_EQ(out[2].car_id, "b");
  EXPECT_LE(out.size(), 4u);
}

TEST(BlockMedian, IdentityAtOneSecond) {
  const Timestamp t0 = 1465200000;
  std::vector<Observation> v;
  for (int s = 0; s < 100; ++s) v.push_back(obs_at("a", t0 + s, s * 0.1, s + 1));
  const auto out = block_median(v, 1);
  ASSERT_EQ(out.size(), v.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    EXPECT_EQ(out[k].y, v[k].y);
    EXPECT_EQ(out[k].segment_id, v[k].segment_id);
    EXPECT_EQ(out[k].time, v[k].time);
  }
}

TEST(BlockMedian, MedianCommutesWithLogForOddCounts) {
  std::vector<double> ppb{3.0, 50.0, 7.0, 12.0, 1.5};
  std::vector<double> logs;
  for (double p : ppb) logs.push_back(std::log(p));
  EXPECT_DOUBLE_EQ(median_inplace(logs), std::log(median_inplace(ppb)));
}

TEST(Files, RoundTrips) {
  fx::TempDir dir("ingest");
  const std::vector<RawSample> samples{{"car1", 1465200000, {37.8, -122.27}, 12.5}, {"car2", 1465200001, {37.81, -122.26}, 0.25}};
  write_samples(dir.file("s.csv"), samples);
  const auto s2 = read_samples(dir.file("s.csv"));
  ASSERT_EQ(s2.size(), 2u);
  EXPECT_EQ(s2[1].car_id, "car2");
  EXPECT_EQ(s2[1].time, 1465200001);
  EXPECT_EQ(s2[1].no2_ppb, 0.25);
  EXPECT_EQ(s2[0].position.lon, -122.27);

  std::vector<Segment> segs{fx::make_segment(5, {0.1, 0.2}, 1), fx::make_segment(9, {0.3, -0.2}, 1)};
  write_segments(dir.file("g.csv"), segs);
  const auto g2 = read_segments(dir.file("g.csv"));
  ASSERT_EQ(g2.size(), 2u);
  EXPECT_EQ(g2[1].id, 9);
  EXPECT_EQ(g2[1].covariates, segs[1].covariates);
  EXPECT_EQ(g2[0].center.lat, segs[0].center.lat);

  std::vector<Observation> obs{obs_at("a", 1465200030, -0.5, 5)};
  obs[0].block_seconds = 60;
  write_observations(dir.file("o.csv"), obs);
  const auto o2 = read_observations(dir.file("o.csv"));
  ASSERT_EQ(o2.size(), 1u);
  EXPECT_EQ(o2[0].y, -0.5);
  EXPECT_EQ(o2[0].block_seconds, 60);
  EXPECT_EQ(o2[0].planar.east_km, 5.0);

  const std::vector<Centerline> lines{{2, {offset_m(0, 0), offset_m(5, 5)}}, {1, {offset_m(10, 0), offset_m(20, 0), offset_m(30, 0)}}};
  write_centerlines(dir.file("c.csv"), lines);
  const auto c2 = read_centerlines(dir.file("c.csv"));
  ASSERT_EQ(c2.size(), 2u);
  std::size_t three = c2[0].vertices.size() == 3 ? 0 : 1;
  EXPECT_EQ(c2[three].way_id, 1);
  EXPECT_EQ(c2[three].vertices[2].lat, lines[1].vertices[2].lat);
}

TEST(Files, SampleValidation) {
  fx::TempDir dir("ingest_bad");
  auto write = [&](const std::string& body) {
    std::ofstream(dir.file("bad.csv")) << "car_id,timestamp,lat,lon,no2_ppb\n" << body;
    return dir.file("bad.csv");
  };
  EXPECT_THROW(read_samples(write("a,2016-06-06T00:00:00Z,95,0,1\n")), Error);
  EXPECT_THROW(read_samples(write("a,2016-06-06T00:00:00Z,37,0,nan\n")), Error);
  EXPECT_THROW(read_samples(write("a,2016-06-06T00:00:00Z,37,0,1\na,2016-06-06T00:00:00Z,37,0,2\n")), Error);
  EXPECT_THROW(read_samples(dir.file("missing.csv")), Error);
}

TEST(Files, CovariateAttachUsesNearestPoint) {
  std::vector<Segment> segs(2);
  segs[0].id = 1;
  segs[0].center = offset_m(0, 0);
  segs[1].id = 2;
  segs[1].center = offset_m(1000, 0);
  std::vector<CovariatePoint> pts(2);
  pts[0].position = offset_m(900, 0);
  pts[0].covariates.fill(2.0);
  pts[1].position = offset_m(50, 0);
  pts[1].covariates.fill(1.0);
  attach_covariates(segs, pts, kOrigin);
  EXPECT_EQ(segs[0].covariates[0], 1.0);
  EXPECT_EQ(segs[1].covariates[27], 2.0);
  EXPECT_EQ(covariate_column_name(0), "c01");
  EXPECT_EQ(covariate_column_name(27), "c28");
}
