#include "stlur/ingest.hpp"

#include "stlur/common.hpp"
#include "stlur/csv.hpp"

#include <algorithm>
#include <memory>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <unordered_map>

namespace stlur {

namespace {

constexpr double kTieToleranceKm = 1e-12;

bool closer(double d, std::int64_t id, double best_d, std::int64_t best_id) {
  if (d < best_d - kTieToleranceKm) return true;
  return std::abs(d - best_d) <= kTieToleranceKm && id < best_id;
}

/// Uniform bucket grid over planar points for radius-bounded lookups.
class PlanarGrid {
 public:
  PlanarGrid(std::span<const PlanarPoint> points, double cell_km) : cell_(cell_km) {
    for (std::size_t i = 0; i < points.size(); ++i) cells_[key(cell_of(points[i].east_km), cell_of(points[i].north_km))].push_back(i);
  }

  template <typename Fn>
  void visit_near(PlanarPoint p, Fn&& fn) const {
    const long long cx = cell_of(p.east_km);
    const long long cy = cell_of(p.north_km);
    for (long long dx = -1; dx <= 1; ++dx) {
      for (long long dy = -1; dy <= 1; ++dy) {
        auto it = cells_.find(key(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (std::size_t i : it->second) fn(i);
      }
    }
  }

 private:
  long long cell_of(double v) const { return static_cast<long long>(std::floor(v / cell_)); }
  static std::uint64_t key(long long x, long long y) {
    return (static_cast<std::uint64_t>(x) << 32) ^ (static_cast<std::uint64_t>(y) & 0xffffffffULL);
  }

  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

std::string header_with_covariates(const char* prefix) {
  std::string header = prefix;
  for (std::size_t c = 0; c < kCovariateCount; ++c) header += "," + covariate_column_name(c);
  return header;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  return out;
}

CovariateVector read_covariates(const CsvReader& reader, const std::vector<std::string>& fields) {
  CovariateVector cov{};
  for (std::size_t c = 0; c < kCovariateCount; ++c) {
    cov[c] = parse_double(fields[reader.column(covariate_column_name(c))], covariate_column_name(c));
  }
  return cov;
}

}  // namespace

std::string covariate_column_name(std::size_t index) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "c%02zu", index + 1);
  return buf;
}

std::vector<Segment> segmentize_centerlines(std::span<const Centerline> centerlines, double interval_m) {
  if (centerlines.empty()) throw Error("no geometry");
  if (!(interval_m > 0.0)) throw Error("segment interval must be positive");
  // Common origin for the whole network so pieces are measured consistently.
  GeoPoint origin{};
  std::size_t vertex_count = 0;
  for (const auto& line : centerlines) {
    if (line.vertices.size() < 2) throw Error("centerline " + std::to_string(line.way_id) + " has fewer than 2 vertices");
    for (const auto& v : line.vertices) {
      origin.lat += v.lat;
      origin.lon += v.lon;
      ++vertex_count;
    }
  }
  origin.lat /= static_cast<double>(vertex_count);
  origin.lon /= static_cast<double>(vertex_count);

  const double interval_km = interval_m / 1000.0;
  std::vector<Segment> segments;
  std::int64_t next_id = 1;
  for (const auto& line : centerlines) {
    std::vector<PlanarPoint> pts;
    std::vector<double> cumulative{0.0};
    for (const auto& v : line.vertices) pts.push_back(project(v, origin));
    for (std::size_t i = 1; i < pts.size(); ++i) cumulative.push_back(cumulative.back() + planar_distance_km(pts[i - 1], pts[i]));
    const double length = cumulative.back();
    if (!(length > 0.0)) continue;

    const auto pieces = static_cast<std::size_t>(std::max(1.0, std::ceil(length / interval_km - 1e-9)));
    std::size_t edge = 1;
    for (std::size_t k = 0; k < pieces; ++k) {
      const double lo = static_cast<double>(k) * interval_km;
      const double hi = std::min(length, lo + interval_km);
      const double s = 0.5 * (lo + hi);
      while (edge + 1 < cumulative.size() && cumulative[edge] < s) ++edge;
      const double span = cumulative[edge] - cumulative[edge - 1];
      const double frac = span > 0 ? (s - cumulative[edge - 1]) / span : 0.0;
      const PlanarPoint a = pts[edge - 1];
      const PlanarPoint b = pts[edge];
      Segment seg;
      seg.id = next_id++;
      seg.planar = {a.east_km + frac * (b.east_km - a.east_km), a.north_km + frac * (b.north_km - a.north_km)};
      seg.center = unproject(seg.planar, origin);
      segments.push_back(seg);
    }
  }
  if (segments.empty()) throw Error("no geometry");
  return segments;
}

std::size_t nearest_segment_brute_force(PlanarPoint p, std::span<const Segment> segments) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const double d = planar_distance_km(p, segments[i].planar);
    if (i == 0 || closer(d, segments[i].id, best_d, segments[best].id)) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

SnapReport snap_to_segments(std::span<const RawSample> samples, std::span<const Segment> segments, GeoPoint origin,
                            const SnapOptions& options) {
  if (segments.empty()) throw Error("segment table is empty");
  std::vector<PlanarPoint> planar;
  planar.reserve(segments.size());
  for (const auto& s : segments) planar.push_back(s.planar);

  const bool bounded = std::isfinite(options.max_snap_km) && options.max_snap_km > 0;
  std::unique_ptr<PlanarGrid> grid;
  if (bounded) grid = std::make_unique<PlanarGrid>(planar, options.max_snap_km);

  SnapReport report;
  report.observations.reserve(samples.size());
  for (const auto& sample : samples) {
    const PlanarPoint p = project(sample.position, origin);
    std::size_t best = segments.size();
    double best_d = std::numeric_limits<double>::infinity();
    if (bounded) {
      grid->visit_near(p, [&](std::size_t i) {
        const double d = planar_distance_km(p, planar[i]);
        if (best == segments.size() || closer(d, segments[i].id, best_d, segments[best].id)) {
          best = i;
          best_d = d;
        }
      });
    } else {
      best = nearest_segment_brute_force(p, segments);
      best_d = planar_distance_km(p, planar[best]);
    }
    if (best == segments.size() || best_d > options.max_snap_km) {
      ++report.dropped;
      continue;
    }
    if (!(sample.no2_ppb >= options.floor_ppb)) ++report.floored;
    Observation obs;
    obs.car_id = sample.car_id;
    obs.time = sample.time;
    obs.segment_id = segments[best].id;
    obs.planar = segments[best].planar;
    obs.y = std::log(std::max(sample.no2_ppb, options.floor_ppb));
    obs.block_seconds = 1;
    report.observations.push_back(std::move(obs));
  }
  sort_observations(report.observations);
  return report;
}

void sort_observations(std::vector<Observation>& obs) {
  std::stable_sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) {
    if (a.car_id != b.car_id) return a.car_id < b.car_id;
    return a.time < b.time;
  });
}

double median_inplace(std::vector<double>& values) {
  if (values.empty()) throw Error("median of empty set");
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

std::vector<Observation> block_median(std::span<const Observation> obs, int block_seconds) {
  if (block_seconds < 1) throw Error("block_seconds must be at least 1");
  std::vector<Observation> out;
  std::vector<double> values;
  std::size_t i = 0;
  while (i < obs.size()) {
    const std::int64_t block = floor_div(obs[i].time, block_seconds);
    std::size_t j = i;
    while (j < obs.size() && obs[j].car_id == obs[i].car_id && floor_div(obs[j].time, block_seconds) == block) {
      if (j > i && obs[j].time < obs[j - 1].time) throw Error("observations not sorted by (car, time)");
      ++j;
    }
    const std::int64_t start = block * block_seconds;
    // Doubled units keep the block centre integral.
    const std::int64_t centre2 = 2 * start + block_seconds;
    std::size_t representative = i;
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    values.clear();
    for (std::size_t k = i; k < j; ++k) {
      values.push_back(obs[k].y);
      const std::int64_t d = std::abs(2 * obs[k].time - centre2);
      if (d < best) {
        best = d;
        representative = k;
      }
    }
    Observation row = obs[representative];
    row.y = median_inplace(values);
    row.time = start + block_seconds / 2;
    row.block_seconds = block_seconds;
    out.push_back(std::move(row));
    i = j;
  }
  return out;
}

GeoPoint segment_centroid(std::span<const Segment> segments) {
  if (segments.empty()) throw Error("segment table is empty");
  GeoPoint c{};
  for (const auto& s : segments) {
    c.lat += s.center.lat;
    c.lon += s.center.lon;
  }
  c.lat /= static_cast<double>(segments.size());
  c.lon /= static_cast<double>(segments.size());
  return c;
}

void assign_planar(std::span<Segment> segments, GeoPoint origin) {
  for (auto& s : segments) s.planar = project(s.center, origin);
}

std::vector<RawSample> read_samples(const std::string& path) {
  CsvReader reader(path);
  const auto car = reader.column("car_id");
  const auto ts = reader.column("timestamp");
  const auto lat = reader.column("lat");
  const auto lon = reader.column("lon");
  const auto no2 = reader.column("no2_ppb");
  std::vector<RawSample> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    RawSample s;
    s.car_id = f[car];
    s.time = parse_iso8601(f[ts]);
    s.position = {parse_double(f[lat], "lat"), parse_double(f[lon], "lon")};
    s.no2_ppb = parse_double(f[no2], "no2_ppb");
    const std::string where = path + ":" + std::to_string(reader.line_number());
    if (!std::isfinite(s.no2_ppb)) throw Error(where + ": non-finite no2_ppb");
    if (!(std::abs(s.position.lat) <= 90.0) || !(std::abs(s.position.lon) <= 180.0)) throw Error(where + ": coordinates out of range");
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(), [](const RawSample& a, const RawSample& b) {
    if (a.car_id != b.car_id) return a.car_id < b.car_id;
    return a.time < b.time;
  });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].car_id == out[i - 1].car_id && out[i].time == out[i - 1].time) {
      throw Error("duplicate timestamp " + format_iso8601(out[i].time) + " for car " + out[i].car_id);
    }
  }
  return out;
}

void write_samples(const std::string& path, std::span<const RawSample> samples) {
  auto out = open_output(path);
  out << "car_id,timestamp,lat,lon,no2_ppb\n";
  for (const auto& s : samples) {
    out << s.car_id << ',' << format_iso8601(s.time) << ',' << format_double(s.position.lat) << ','
        << format_double(s.position.lon) << ',' << format_double(s.no2_ppb) << '\n';
  }
}

std::vector<Centerline> read_centerlines(const std::string& path) {
  CsvReader reader(path);
  const auto way = reader.column("way_id");
  const auto idx = reader.column("vertex_index");
  const auto lat = reader.column("lat");
  const auto lon = reader.column("lon");
  std::map<std::int64_t, std::map<long long, GeoPoint>> ways;
  std::vector<std::string> f;
  while (reader.next(f)) {
    ways[parse_int(f[way], "way_id")][parse_int(f[idx], "vertex_index")] = {parse_double(f[lat], "lat"),
                                                                              parse_double(f[lon], "lon")};
  }
  if (ways.empty()) throw Error("no geometry");
  std::vector<Centerline> out;
  for (auto& [id, vertices] : ways) {
    Centerline line{id, {}};
    for (auto& [k, v] : vertices) line.vertices.push_back(v);
    out.push_back(std::move(line));
  }
  return out;
}

void write_centerlines(const std::string& path, std::span<const Centerline> centerlines) {
  auto out = open_output(path);
  out << "way_id,vertex_index,lat,lon\n";
  for (const auto& line : centerlines) {
    for (std::size_t i = 0; i < line.vertices.size(); ++i) {
      out << line.way_id << ',' << i << ',' << format_double(line.vertices[i].lat) << ','
          << format_double(line.vertices[i].lon) << '\n';
    }
  }
}

std::vector<Segment> read_segments(const std::string& path) {
  CsvReader reader(path);
  const auto id = reader.column("segment_id");
  const auto lat = reader.column("lat");
  const auto lon = reader.column("lon");
  std::vector<Segment> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    Segment s;
    s.id = parse_int(f[id], "segment_id");
    s.center = {parse_double(f[lat], "lat"), parse_double(f[lon], "lon")};
    s.covariates = read_covariates(reader, f);
    out.push_back(s);
  }
  std::vector<std::int64_t> ids;
  for (const auto& s : out) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw Error("duplicate segment_id in '" + path + "'");
  return out;
}

void write_segments(const std::string& path, std::span<const Segment> segments) {
  auto out = open_output(path);
  out << header_with_covariates("segment_id,lat,lon") << '\n';
  for (const auto& s : segments) {
    out << s.id << ',' << format_double(s.center.lat) << ',' << format_double(s.center.lon);
    for (double c : s.covariates) out << ',' << format_double(c);
    out << '\n';
  }
}

std::vector<Observation> read_observations(const std::string& path) {
  CsvReader reader(path);
  const auto car = reader.column("car_id");
  const auto ts = reader.column("timestamp");
  const auto seg = reader.column("segment_id");
  const auto east = reader.column("east_km");
  const auto north = reader.column("north_km");
  const auto y = reader.column("log_no2");
  const auto block = reader.column("block_seconds");
  std::vector<Observation> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    Observation o;
    o.car_id = f[car];
    o.time = parse_iso8601(f[ts]);
    o.segment_id = parse_int(f[seg], "segment_id");
    o.planar = {parse_double(f[east], "east_km"), parse_double(f[north], "north_km")};
    o.y = parse_double(f[y], "log_no2");
    o.block_seconds = static_cast<int>(parse_int(f[block], "block_seconds"));
    if (!std::isfinite(o.y)) throw Error(path + ":" + std::to_string(reader.line_number()) + ": non-finite log_no2");
    out.push_back(std::move(o));
  }
  sort_observations(out);
  return out;
}

void write_observations(const std::string& path, std::span<const Observation> obs) {
  auto out = open_output(path);
  out << "car_id,timestamp,segment_id,east_km,north_km,log_no2,block_seconds\n";
  for (const auto& o : obs) {
    out << o.car_id << ',' << format_iso8601(o.time) << ',' << o.segment_id << ',' << format_double(o.planar.east_km)
        << ',' << format_double(o.planar.north_km) << ',' << format_double(o.y) << ',' << o.block_seconds << '\n';
  }
}

std::vector<CovariatePoint> read_covariate_points(const std::string& path) {
  CsvReader reader(path);
  const auto lat = reader.column("lat");
  const auto lon = reader.column("lon");
  std::vector<CovariatePoint> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    CovariatePoint p;
    p.position = {parse_double(f[lat], "lat"), parse_double(f[lon], "lon")};
    p.covariates = read_covariates(reader, f);
    out.push_back(p);
  }
  return out;
}

void write_covariate_points(const std::string& path, std::span<const CovariatePoint> points) {
  auto out = open_output(path);
  out << header_with_covariates("lat,lon") << '\n';
  for (const auto& p : points) {
    out << format_double(p.position.lat) << ',' << format_double(p.position.lon);
    for (double c : p.covariates) out << ',' << format_double(c);
    out << '\n';
  }
}

void attach_covariates(std::span<Segment> segments, std::span<const CovariatePoint> points, GeoPoint origin) {
  if (points.empty()) throw Error("covariate table is empty");
  std::vector<PlanarPoint> planar;
  for (const auto& p : points) planar.push_back(project(p.position, origin));
  for (auto& seg : segments) {
    const PlanarPoint s = project(seg.center, origin);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < planar.size(); ++i) {
      const double d = planar_distance_km(s, planar[i]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    seg.covariates = points[best].covariates;
  }
}

}  // namespace stlur
