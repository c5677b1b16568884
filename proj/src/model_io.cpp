#include "stlur/model.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace stlur {

using nlohmann::json;

namespace {

json vec_to_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vec vec_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

json model_to_json(const FittedModel& m) {
  json j;
  j["schema_version"] = kModelSchemaVersion;
  j["kind"] = std::string(to_string(m.kind));
  j["beta"] = vec_to_json(m.beta);
  j["params"] = {{"kind", std::string(to_string(m.params.kind))},
                 {"sigma2", m.params.sigma2},
                 {"tau2", m.params.tau2},
                 {"theta_s", m.params.theta_s},
                 {"theta_t", m.params.theta_t},
                 {"theta_x", m.params.theta_x}};
  j["scheme"] = {{"lag_minutes", m.scheme.lag_minutes},
                 {"width_minutes", m.scheme.width_minutes},
                 {"max_size", m.scheme.max_size},
                 {"seed", m.scheme.seed},
                 {"mode", std::string(to_string(m.scheme.mode))},
                 {"closed_left", m.scheme.closed_left}};
  j["standardization"] = {{"means", vec_to_json(m.standardization.means)}, {"sds", vec_to_json(m.standardization.sds)}};
  json loadings = json::array();
  for (Eigen::Index k = 0; k < m.basis.loadings.cols(); ++k) loadings.push_back(vec_to_json(m.basis.loadings.col(k)));
  j["basis"] = {{"loadings", loadings},
                {"explained", vec_to_json(m.basis.explained)},
                {"k_computed", m.basis.k_computed},
                {"k_retained", m.basis.k_retained}};
  j["origin"] = {{"lat", m.origin.lat}, {"lon", m.origin.lon}};
  j["training"] = {{"start", format_iso8601(m.train_start)},
                   {"end", format_iso8601(m.train_end)},
                   {"n", m.n_train},
                   {"block_seconds", m.block_seconds},
                   {"utc_offset_hours", m.utc_offset_hours},
                   {"objective", m.objective},
                   {"converged", m.converged},
                   {"pc_t_stats", m.pc_t_stats}};
  return j;
}

FittedModel model_from_json(const json& j) {
  if (j.value("schema_version", 0) != kModelSchemaVersion) throw Error("unsupported model schema version");
  FittedModel m;
  m.kind = parse_cov_kind(j.at("kind").get<std::string>());
  m.beta = vec_from_json(j.at("beta"));
  const auto& p = j.at("params");
  m.params.kind = parse_cov_kind(p.at("kind").get<std::string>());
  m.params.sigma2 = p.at("sigma2").get<double>();
  m.params.tau2 = p.at("tau2").get<double>();
  m.params.theta_s = p.at("theta_s").get<double>();
  m.params.theta_t = p.at("theta_t").get<double>();
  m.params.theta_x = p.at("theta_x").get<double>();
  const auto& s = j.at("scheme");
  m.scheme.lag_minutes = s.at("lag_minutes").get<double>();
  m.scheme.width_minutes = s.at("width_minutes").get<double>();
  m.scheme.max_size = s.at("max_size").get<std::size_t>();
  m.scheme.seed = s.at("seed").get<std::uint64_t>();
  m.scheme.mode = parse_conditioning_mode(s.at("mode").get<std::string>());
  m.scheme.closed_left = s.at("closed_left").get<bool>();
  m.standardization.means = vec_from_json(j.at("standardization").at("means"));
  m.standardization.sds = vec_from_json(j.at("standardization").at("sds"));
  const auto& b = j.at("basis");
  const auto& cols = b.at("loadings");
  m.basis.loadings.resize(m.standardization.means.size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) m.basis.loadings.col(static_cast<Eigen::Index>(k)) = vec_from_json(cols[k]);
  m.basis.explained = vec_from_json(b.at("explained"));
  m.basis.k_computed = b.at("k_computed").get<int>();
  m.basis.k_retained = b.at("k_retained").get<int>();
  m.origin = {j.at("origin").at("lat").get<double>(), j.at("origin").at("lon").get<double>()};
  const auto& t = j.at("training");
  m.train_start = parse_iso8601(t.at("start").get<std::string>());
  m.train_end = parse_iso8601(t.at("end").get<std::string>());
  m.n_train = t.at("n").get<std::size_t>();
  m.block_seconds = t.at("block_seconds").get<int>();
  m.utc_offset_hours = t.at("utc_offset_hours").get<double>();
  m.objective = t.at("objective").get<double>();
  m.converged = t.at("converged").get<bool>();
  m.pc_t_stats = t.at("pc_t_stats").get<std::vector<double>>();
  if (m.beta.size() != design_size(m.basis.k_retained)) throw Error("model beta length does not match its PCA basis");
  m.params.validate();
  return m;
}

std::string model_to_string(const FittedModel& model) { return model_to_json(model).dump(2) + "\n"; }

void save_model(const std::string& path, const FittedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << model_to_string(model);
}

FittedModel load_model(const std::string& path) {
  if (!std::filesystem::exists(path)) throw Error("model not found");
  std::ifstream in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("cannot parse model '" + path + "': " + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const json::exception& e) {
    throw Error("malformed model '" + path + "': " + e.what());
  }
}

SegmentTable::SegmentTable(std::vector<Segment> segments, GeoPoint origin)
    : segments_(std::move(segments)), origin_(origin) {
  if (segments_.empty()) throw Error("segment table is empty");
  assign_planar(segments_, origin_);
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (!index_.emplace(segments_[i].id, i).second) throw Error("duplicate segment id " + std::to_string(segments_[i].id));
  }
}

SegmentTable::SegmentTable(std::vector<Segment> segments)
    : SegmentTable(segments, segment_centroid(segments)) {}

const Segment& SegmentTable::at(std::int64_t id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error("unknown segment id " + std::to_string(id));
  return segments_[it->second];
}

SpacetimePoint make_point(const Featurizer& featurizer, const Segment& segment, Timestamp time) {
  SpacetimePoint p;
  p.planar = segment.planar;
  p.time_h = to_hours(time);
  p.x_cov = featurizer.scores(segment);
  return p;
}

ObservationDesign build_observation_design(const Featurizer& featurizer, const SegmentTable& segments,
                                           std::span<const Observation> obs) {
  ObservationDesign d;
  const auto n = static_cast<Eigen::Index>(obs.size());
  d.X.resize(n, featurizer.design_size());
  d.y.resize(n);
  d.points.reserve(obs.size());
  std::unordered_map<std::int64_t, std::vector<double>> score_cache;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = obs[static_cast<std::size_t>(i)];
    auto it = score_cache.find(o.segment_id);
    if (it == score_cache.end()) it = score_cache.emplace(o.segment_id, featurizer.scores(segments.at(o.segment_id))).first;
    const DesignRow row = build_design_row(it->second, local_hour_of_day(o.time, featurizer.utc_offset_hours()));
    d.X.row(i) = row.x_mean.transpose();
    d.y[i] = o.y;
    d.points.push_back({o.planar, to_hours(o.time), it->second});
  }
  return d;
}

std::vector<std::size_t> time_order(std::span<const Observation> obs) {
  std::vector<std::size_t> order(obs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (obs[a].time != obs[b].time) return obs[a].time < obs[b].time;
    if (obs[a].car_id != obs[b].car_id) return obs[a].car_id < obs[b].car_id;
    return obs[a].segment_id < obs[b].segment_id;
  });
  return order;
}

}  // namespace stlur
