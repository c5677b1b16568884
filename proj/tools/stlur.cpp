// stlur command-line driver.

#include "stlur/common.hpp"
#include "stlur/config.hpp"
#include "stlur/csv.hpp"
#include "stlur/estimation.hpp"
#include "stlur/ingest.hpp"
#include "stlur/kriging.hpp"
#include "stlur/lagsim.hpp"
#include "stlur/model.hpp"
#include "stlur/netdesign.hpp"
#include "stlur/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stlur;

namespace {

struct Flag {
  std::string name;
  std::string key;
  std::string help;
};

/// Outputs are written to temporaries and renamed only when the command
/// succeeds.
class Outputs {
 public:
  std::string stage(const std::string& final_path) {
    if (final_path.empty()) throw Error("no output path given");
    const std::string tmp = final_path + ".partial";
    staged_.emplace_back(tmp, final_path);
    return tmp;
  }
  void commit() {
    for (const auto& [tmp, dst] : staged_) fs::rename(tmp, dst);
    staged_.clear();
  }
  void discard() {
    std::error_code ec;
    for (const auto& [tmp, dst] : staged_) fs::remove(tmp, ec);
    staged_.clear();
  }

 private:
  std::vector<std::pair<std::string, std::string>> staged_;
};

std::string file_hash(const std::string& path);

struct Context {
  std::string command;
  RunConfig cfg;
  Outputs outputs;
  json meta = json::object();
  std::string primary;  ///< final path of the main artifact (sidecar anchor)

  std::string path(const std::string& key) const {
    auto v = cfg.get("paths." + key);
    if (!v || v->empty()) throw Error("missing required path '" + key + "' (--" + key + ")");
    return *v;
  }
  std::string input(const std::string& key) {
    const std::string p = path(key);
    if (!fs::exists(p)) {
      if (key == "model") throw Error("model not found");
      throw Error("input not found: " + p);
    }
    meta["inputs"][key] = p;
    meta["input_hashes"][key] = file_hash(p);
    return p;
  }
  std::string output() {
    primary = path("out");
    return outputs.stage(primary);
  }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(cfg.get_int("run.seed", 0)); }
  int workers() const { return static_cast<int>(cfg.get_int("run.workers", 1)); }
  double utc_offset() const { return cfg.get_double("model.utc_offset_hours", -8.0); }
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<double> double_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& s : split_list(text)) out.push_back(parse_double(s, what));
  return out;
}

std::vector<int> int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  for (const auto& s : split_list(text)) out.push_back(static_cast<int>(parse_int(s, what)));
  return out;
}

// ---- config readers ----

ConditioningScheme scheme_from(const Context& ctx) {
  ConditioningScheme s;
  s.lag_minutes = ctx.cfg.get_double("scheme.lag_minutes", s.lag_minutes);
  s.width_minutes = ctx.cfg.get_double("scheme.width_minutes", s.width_minutes);
  s.max_size = static_cast<std::size_t>(ctx.cfg.get_int("scheme.max_size", static_cast<std::int64_t>(s.max_size)));
  s.mode = parse_conditioning_mode(ctx.cfg.get_string("scheme.mode", std::string(to_string(s.mode))));
  s.closed_left = ctx.cfg.get_bool("scheme.closed_left", s.closed_left);
  s.seed = ctx.seed();
  s.validate();
  return s;
}

OptimizerConfig optimizer_from(const Context& ctx) {
  OptimizerConfig o;
  o.max_iters = static_cast<int>(ctx.cfg.get_int("optimizer.max_iters", o.max_iters));
  o.rel_tol = ctx.cfg.get_double("optimizer.rel_tol", o.rel_tol);
  o.restarts = static_cast<int>(ctx.cfg.get_int("optimizer.restarts", o.restarts));
  o.seed = ctx.seed();
  o.workers = ctx.workers();
  o.validate();
  return o;
}

FeatureConfig features_from(const Context& ctx) {
  FeatureConfig f;
  f.k_computed = static_cast<int>(ctx.cfg.get_int("features.k_computed", f.k_computed));
  f.k_retained = static_cast<int>(ctx.cfg.get_int("features.k_retained", f.k_retained));
  f.utc_offset_hours = ctx.utc_offset();
  return f;
}

CovKind kind_from(const Context& ctx) { return parse_cov_kind(ctx.cfg.get_string("model.kind", "ST")); }

ForecastOptions forecast_options_from(const Context& ctx) {
  ForecastOptions f;
  f.cond_window_minutes = ctx.cfg.get_double("forecast.cond_window_minutes", f.cond_window_minutes);
  if (ctx.cfg.has("forecast.offset_minutes")) f.offset_minutes = ctx.cfg.get_double("forecast.offset_minutes", 0.0);
  return f;
}

std::vector<Observation> filter_window(std::vector<Observation> obs, const Context& ctx, const std::string& prefix) {
  const auto lo = ctx.cfg.get("window." + prefix + "_start");
  const auto hi = ctx.cfg.get("window." + prefix + "_end");
  if (!lo && !hi) return obs;
  const Timestamp a = lo ? parse_iso8601(*lo) : std::numeric_limits<Timestamp>::min();
  const Timestamp b = hi ? parse_iso8601(*hi) : std::numeric_limits<Timestamp>::max();
  std::erase_if(obs, [&](const Observation& o) { return o.time < a || o.time >= b; });
  return obs;
}

std::vector<Segment> load_segments(Context& ctx) { return read_segments(ctx.input("segments")); }

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a64(ss.str()));
}

json params_json(const CovParams& p) {
  return {{"kind", std::string(to_string(p.kind))}, {"sigma2", p.sigma2}, {"tau2", p.tau2},
          {"theta_s", p.theta_s}, {"theta_t", p.theta_t}, {"theta_x", p.theta_x}};
}

// ---- commands ----

void cmd_synth(Context& ctx) {
  SynthConfig s;
  const auto& c = ctx.cfg;
  s.origin.lat = c.get_double("synth.origin_lat", s.origin.lat);
  s.origin.lon = c.get_double("synth.origin_lon", s.origin.lon);
  s.grid.extent_km = c.get_double("synth.extent_km", s.grid.extent_km);
  s.grid.spacing_km = c.get_double("synth.spacing_km", s.grid.spacing_km);
  s.covariate_grid = static_cast<int>(c.get_int("synth.covariate_grid", s.covariate_grid));
  s.cars = static_cast<int>(c.get_int("synth.cars", s.cars));
  s.days = static_cast<int>(c.get_int("synth.days", s.days));
  if (auto d = c.get("synth.first_day")) s.first_day = parse_iso8601(*d);
  s.utc_offset_hours = ctx.utc_offset();
  s.drive_start_h = c.get_double("synth.drive_start_h", s.drive_start_h);
  s.drive_end_h = c.get_double("synth.drive_end_h", s.drive_end_h);
  s.sample_seconds = c.get_double("synth.sample_seconds", s.sample_seconds);
  s.speed_kmh = c.get_double("synth.speed_kmh", s.speed_kmh);
  s.gps_noise_m = c.get_double("synth.gps_noise_m", s.gps_noise_m);
  s.glitch_rate = c.get_double("synth.glitch_rate", s.glitch_rate);
  s.base_ppb = c.get_double("synth.base_ppb", s.base_ppb);
  s.truth.kind = parse_cov_kind(c.get_string("synth.kind", std::string(to_string(s.truth.kind))));
  s.truth.sigma2 = c.get_double("synth.sigma2", s.truth.sigma2);
  s.truth.tau2 = c.get_double("synth.tau2", s.truth.tau2);
  s.truth.theta_s = c.get_double("synth.theta_s", s.truth.theta_s);
  s.truth.theta_t = c.get_double("synth.theta_t", s.truth.theta_t);
  s.truth.theta_x = c.get_double("synth.theta_x", s.truth.theta_x);
  s.sim_neighbors = static_cast<std::size_t>(c.get_int("synth.sim_neighbors", static_cast<std::int64_t>(s.sim_neighbors)));
  s.seed = ctx.seed();

  const SynthData data = generate_synthetic(s);
  const fs::path dir = ctx.path("out");
  fs::create_directories(dir);
  write_samples(ctx.outputs.stage((dir / "samples.csv").string()), data.samples);
  write_centerlines(ctx.outputs.stage((dir / "centerlines.csv").string()), data.centerlines);
  write_covariate_points(ctx.outputs.stage((dir / "covariates.csv").string()), data.covariate_points);
  ctx.primary = (dir / "samples.csv").string();
  ctx.meta["truth"] = params_json(s.truth);
  ctx.meta["samples"] = data.samples.size();
}

void cmd_segments(Context& ctx) {
  const auto lines = read_centerlines(ctx.input("centerlines"));
  auto segments = segmentize_centerlines(lines, ctx.cfg.get_double("ingest.interval_m", 30.0));
  if (ctx.cfg.has("paths.covariates")) {
    const auto points = read_covariate_points(ctx.input("covariates"));
    attach_covariates(segments, points, segment_centroid(segments));
  }
  write_segments(ctx.output(), segments);
  ctx.meta["segments"] = segments.size();
}

void cmd_snap(Context& ctx) {
  const auto samples = read_samples(ctx.input("samples"));
  SegmentTable table(load_segments(ctx));
  SnapOptions opt;
  opt.max_snap_km = ctx.cfg.get_double("ingest.max_snap_m", 100.0) / 1000.0;
  opt.floor_ppb = ctx.cfg.get_double("ingest.floor_ppb", opt.floor_ppb);
  const auto report = snap_to_segments(samples, table.all(), table.origin(), opt);
  write_observations(ctx.output(), report.observations);
  ctx.meta["snapped"] = report.observations.size();
  ctx.meta["dropped"] = report.dropped;
  ctx.meta["floored"] = report.floored;
}

void cmd_reduce(Context& ctx) {
  auto obs = read_observations(ctx.input("observations"));
  sort_observations(obs);
  const int block = static_cast<int>(ctx.cfg.get_int("ingest.block_seconds", 60));
  const auto reduced = block_median(obs, block);
  write_observations(ctx.output(), reduced);
  ctx.meta["block_seconds"] = block;
  ctx.meta["rows"] = reduced.size();
}

FittedModel fit_from_config(Context& ctx, const std::vector<Observation>& obs, const SegmentTable& table, CovKind kind) {
  FittedModel m = two_step_fit(obs, table, kind, scheme_from(ctx), features_from(ctx), optimizer_from(ctx));
  if (!obs.empty()) m.block_seconds = obs.front().block_seconds;
  return m;
}

void cmd_fit(Context& ctx) {
  const auto obs = filter_window(read_observations(ctx.input("observations")), ctx, "train");
  SegmentTable table(load_segments(ctx));
  const FittedModel m = fit_from_config(ctx, obs, table, kind_from(ctx));
  std::ofstream(ctx.output()) << model_to_string(m);
  ctx.meta["params"] = params_json(m.params);
  ctx.meta["converged"] = m.converged;
}

void cmd_forecast(Context& ctx) {
  const std::string model_path = ctx.input("model");
  const FittedModel model = load_model(model_path);
  auto stream = read_observations(ctx.input("observations"));
  Predictor predictor(model, load_segments(ctx));
  const auto target = ctx.cfg.get("forecast.target_time");
  if (!target) throw Error("missing forecast target time (--target-time)");
  const double h = ctx.cfg.get_double("forecast.h_minutes", 15.0);
  std::vector<std::int64_t> ids;
  for (const auto& s : split_list(ctx.cfg.get_string("forecast.segments", ""))) ids.push_back(parse_int(s, "segment id"));
  std::vector<std::size_t> order = time_order(stream);
  std::vector<Observation> by_time;
  for (auto i : order) by_time.push_back(stream[i]);
  const auto opts = forecast_options_from(ctx);
  const PredictionSet pred = predictor.forecast(by_time, parse_iso8601(*target), h, opts, ids);
  write_predictions(ctx.output(), pred);
  ctx.meta["model_hash"] = file_hash(model_path);
  ctx.meta["h_minutes"] = h;
  ctx.meta["cond_window_minutes"] = opts.cond_window_minutes;
  ctx.meta["offset_minutes"] = opts.offset_minutes.value_or(h);
  ctx.meta["fallback_xonly"] = pred.fallback_xonly;
  ctx.meta["conditioning_size"] = pred.conditioning_size;
}

void cmd_interpolate(Context& ctx) {
  const std::string model_path = ctx.input("model");
  const FittedModel model = load_model(model_path);
  const auto archive = filter_window(read_observations(ctx.input("observations")), ctx, "train");
  const auto segments = load_segments(ctx);
  Predictor predictor(model, segments);
  const auto when = ctx.cfg.get("interpolate.time");
  if (!when) throw Error("missing interpolation time (--time)");
  const Timestamp t = parse_iso8601(*when);
  std::vector<PredictionTarget> targets;
  const auto ids = split_list(ctx.cfg.get_string("forecast.segments", ""));
  if (ids.empty()) {
    for (const auto& s : segments) targets.push_back({s.id, t});
  } else {
    for (const auto& s : ids) targets.push_back({parse_int(s, "segment id"), t});
  }
  const auto k = static_cast<std::size_t>(ctx.cfg.get_int("interpolate.k", 800));
  const PredictionSet pred = predictor.spatial_interpolate(archive, targets, k);
  write_predictions(ctx.output(), pred);
  ctx.meta["model_hash"] = file_hash(model_path);
  ctx.meta["k"] = k;
}

void cmd_carab(Context& ctx) {
  const std::string model_path = ctx.input("model");
  const FittedModel model = load_model(model_path);
  const auto obs = read_observations(ctx.input("observations"));
  Predictor predictor(model, load_segments(ctx));
  std::map<std::int64_t, std::vector<Observation>> days;
  for (const auto& o : obs) days[local_day_index(o.time, model.utc_offset_hours)].push_back(o);
  PredictionSet all;
  for (const auto& [day, rows] : days) {
    PredictionSet p = predictor.car_ab_predict(rows);
    all.append(p);
  }
  write_predictions(ctx.output(), all);
  if (all.size() > 0) {
    const Scores s = score(all, obs);
    ctx.meta["rmspe_ppb"] = s.rmspe_ppb;
    ctx.meta["cor_ppb"] = std::isnan(s.cor_ppb) ? json(nullptr) : json(s.cor_ppb);
  }
  ctx.meta["warnings"] = all.warnings;
  ctx.meta["model_hash"] = file_hash(model_path);
}

void cmd_crossval(Context& ctx) {
  auto obs = read_observations(ctx.input("observations"));
  const auto segments = load_segments(ctx);
  SegmentTable table(segments);
  std::vector<Observation> train, test;
  if (ctx.cfg.has("window.train_start") || ctx.cfg.has("window.train_end") || ctx.cfg.has("window.test_start") ||
      ctx.cfg.has("window.test_end")) {
    train = filter_window(obs, ctx, "train");
    test = filter_window(obs, ctx, "test");
  } else {
    // Default split: first half of the local days trains, the rest tests.
    const auto days = distinct_days(obs, ctx.utc_offset());
    if (days.size() < 2) throw Error("cross-validation needs at least two days of data");
    const std::int64_t cut = days[days.size() / 2];
    for (const auto& o : obs) (local_day_index(o.time, ctx.utc_offset()) < cut ? train : test).push_back(o);
  }
  if (train.empty() || test.empty()) throw Error("empty training or test window");
  std::vector<Observation> test_by_time;
  for (auto i : time_order(test)) test_by_time.push_back(test[i]);

  const auto horizons = double_list(ctx.cfg.get_string("crossval.horizons", "5,15,60"), "horizon");
  const auto opts = forecast_options_from(ctx);
  std::ofstream out(ctx.output());
  out << "kind,lag_minutes,protocol,h_minutes,rmspe_ppb,cor_ppb,mspe_log,n\n";
  auto row = [&](const std::string& kind, double lag, const std::string& protocol, double h, const Scores& s) {
    out << kind << ',' << format_double(lag) << ',' << protocol << ',' << format_double(h) << ','
        << format_double(s.rmspe_ppb) << ',' << format_double(s.cor_ppb) << ',' << format_double(s.mspe_log) << ','
        << s.n << '\n';
  };
  const auto lags = double_list(ctx.cfg.get_string("crossval.lags", ctx.cfg.get_string("scheme.lag_minutes", "0")), "lag");
  const RunConfig base = ctx.cfg;
  for (const auto& kind_name : split_list(base.get_string("crossval.kinds", "XONLY,S,ST,STX"))) {
    const CovKind kind = parse_cov_kind(kind_name);
    const std::vector<double> kind_lags = kind == CovKind::ST || kind == CovKind::STX ? lags : std::vector<double>{0.0};
    for (double lag : kind_lags) {
      ctx.cfg = base;
      ctx.cfg.set("scheme.lag_minutes", format_double(lag));
      if (kind == CovKind::S) {
        ctx.cfg.set("scheme.mode", "k_nearest_time");
        ctx.cfg.set("scheme.max_size", ctx.cfg.get_string("crossval.s_neighbors", "30"));
      }
      const FittedModel m = fit_from_config(ctx, train, table, kind);
      Predictor predictor(m, segments);
      for (double h : horizons) {
        PredictionSet pred;
        if (kind == CovKind::S) {
          std::vector<PredictionTarget> targets;
          for (const auto& o : test_by_time) targets.push_back(predictor.target_of(o));
          pred = predictor.spatial_interpolate(train, targets, static_cast<std::size_t>(ctx.cfg.get_int("interpolate.k", 800)));
        } else {
          pred = predictor.forecast_observations(test_by_time, test_by_time, h, opts);
        }
        row(std::string(to_string(kind)), lag, "forecast", h, score(pred, test));
      }
      if (kind != CovKind::XOnly) {
        std::map<std::int64_t, std::vector<Observation>> days;
        for (const auto& o : test) days[local_day_index(o.time, m.utc_offset_hours)].push_back(o);
        PredictionSet all;
        for (const auto& [d, rows] : days) all.append(predictor.car_ab_predict(rows));
        if (all.size() > 0) row(std::string(to_string(kind)), lag, "carab", 0.0, score(all, test));
      }
      ctx.meta["fits"].push_back({{"kind", kind_name}, {"lag_minutes", lag}, {"params", params_json(m.params)}});
    }
  }
  ctx.cfg = base;
  ctx.meta["n_train"] = train.size();
  ctx.meta["n_test"] = test.size();
}

void cmd_sliding(Context& ctx) {
  const auto obs = read_observations(ctx.input("observations"));
  const auto segments = load_segments(ctx);
  SlidingWindowConfig w;
  w.window_weeks = static_cast<int>(ctx.cfg.get_int("sliding.window_weeks", w.window_weeks));
  w.horizon_minutes = ctx.cfg.get_double("sliding.horizon_minutes", w.horizon_minutes);
  w.forecast = forecast_options_from(ctx);
  if (auto o = ctx.cfg.get("sliding.origin")) w.origin = parse_iso8601(*o);
  const auto results =
      sliding_window_fit(obs, segments, kind_from(ctx), scheme_from(ctx), features_from(ctx), optimizer_from(ctx), w);
  std::ofstream out(ctx.output());
  out << "week_start,n_train,n_test,sigma2,tau2,theta_s,theta_t,theta_x,mspe_log,warning\n";
  for (const auto& r : results) {
    out << format_iso8601(r.week_start) << ',' << r.n_train << ',' << r.n_test << ',';
    if (r.model) {
      const auto& p = r.model->params;
      out << format_double(p.sigma2) << ',' << format_double(p.tau2) << ',' << format_double(p.theta_s) << ','
          << format_double(p.theta_t) << ',' << format_double(p.theta_x) << ',';
    } else {
      out << ",,,,,";
    }
    out << format_double(r.mspe_log) << ',' << r.warning << '\n';
  }
  ctx.meta["window_weeks"] = w.window_weeks;
}

void cmd_bootstrap(Context& ctx) {
  const auto obs = read_observations(ctx.input("observations"));
  SegmentTable table(load_segments(ctx));
  BootstrapConfig b;
  b.window_weeks = static_cast<int>(ctx.cfg.get_int("bootstrap.window_weeks", b.window_weeks));
  b.reps = static_cast<int>(ctx.cfg.get_int("bootstrap.reps", b.reps));
  b.seed = ctx.seed();
  const auto reps = bootstrap_theta(obs, table, kind_from(ctx), scheme_from(ctx), features_from(ctx), optimizer_from(ctx), b);
  std::ofstream out(ctx.output());
  out << "rep,sigma2,tau2,theta_s,theta_t,theta_x\n";
  for (std::size_t r = 0; r < reps.size(); ++r) {
    const auto& p = reps[r];
    out << r << ',' << format_double(p.sigma2) << ',' << format_double(p.tau2) << ',' << format_double(p.theta_s) << ','
        << format_double(p.theta_t) << ',' << format_double(p.theta_x) << '\n';
  }
}

void cmd_design(Context& ctx) {
  const auto obs = read_observations(ctx.input("observations"));
  SegmentTable table(load_segments(ctx));
  NetworkExperimentConfig n;
  std::optional<Featurizer> featurizer;
  if (ctx.cfg.has("paths.model")) {
    const FittedModel m = load_model(ctx.input("model"));
    n.params = m.params;
    featurizer = m.featurizer();
  } else {
    n.params.kind = kind_from(ctx);
  }
  const auto& c = ctx.cfg;
  n.params.sigma2 = c.get_double("design.sigma2", n.params.sigma2);
  n.params.tau2 = c.get_double("design.tau2", n.params.tau2);
  n.params.theta_s = c.get_double("design.theta_s", n.params.theta_s);
  n.params.theta_t = c.get_double("design.theta_t", n.params.theta_t);
  n.params.theta_x = c.get_double("design.theta_x", n.params.theta_x);
  if (n.params.kind == CovKind::STX && !featurizer) throw Error("STX network design needs a fitted model (--model)");
  n.max_count = static_cast<int>(c.get_int("design.max_count", n.max_count));
  n.reps = static_cast<int>(c.get_int("design.reps", n.reps));
  n.n_targets = static_cast<std::size_t>(c.get_int("design.n_targets", static_cast<std::int64_t>(n.n_targets)));
  n.cap = static_cast<std::size_t>(c.get_int("design.cap", static_cast<std::int64_t>(n.cap)));
  n.window.sampling_seconds = static_cast<int>(c.get_int("design.sampling_seconds", n.window.sampling_seconds));
  n.window.utc_offset_hours = ctx.utc_offset();
  n.seed = ctx.seed();
  n.workers = ctx.workers();

  std::vector<DesignSite> sites;
  for (const auto& s : table.all()) {
    sites.push_back({s.id, s.planar, featurizer ? featurizer->scores(s) : std::vector<double>{}});
  }
  std::map<std::pair<std::string, std::int64_t>, std::vector<Observation>> by_day;
  for (const auto& o : obs) by_day[{o.car_id, local_day_index(o.time, n.window.utc_offset_hours)}].push_back(o);
  std::vector<std::vector<Observation>> archive;
  for (auto& [key, rows] : by_day) archive.push_back(std::move(rows));

  const NetworkReport report = compare_networks(archive, sites, n);
  write_design_rows(ctx.output(), report.rows);
  ctx.meta["params"] = params_json(n.params);
  ctx.meta["flatten_mobile"] = report.flatten_mobile;
  ctx.meta["flatten_fixed"] = report.flatten_fixed;
  ctx.meta["cap_bound_rows"] = report.cap_bound_rows;
  json summary = json::array();
  for (const auto& s : report.summary) {
    summary.push_back({{"kind", std::string(to_string(s.kind))}, {"count", s.count},
                       {"forecast", {s.forecast_mean, s.forecast_lo, s.forecast_hi}},
                       {"interp", {s.interp_mean, s.interp_lo, s.interp_hi}}});
  }
  ctx.meta["summary"] = summary;
}

void cmd_lagsim(Context& ctx) {
  LagSimConfig l;
  const auto& c = ctx.cfg;
  if (auto v = c.get("lagsim.thetas")) l.thetas = double_list(*v, "theta");
  l.n_train = static_cast<std::size_t>(c.get_int("lagsim.n_train", static_cast<std::int64_t>(l.n_train)));
  l.n_test = static_cast<std::size_t>(c.get_int("lagsim.n_test", static_cast<std::int64_t>(l.n_test)));
  l.reps = static_cast<int>(c.get_int("lagsim.reps", l.reps));
  if (auto v = c.get("lagsim.fit_lags")) l.fit_lags = int_list(*v, "lag");
  if (auto v = c.get("lagsim.horizons")) l.horizons = int_list(*v, "horizon");
  l.burn_in = static_cast<int>(c.get_int("lagsim.burn_in", l.burn_in));
  l.intercept = c.get_bool("lagsim.intercept", l.intercept);
  l.seed = ctx.seed();
  l.workers = ctx.workers();
  const auto cells = relative_mse_table(l);
  write_lag_table(ctx.output(), cells);
  ctx.meta["reps"] = l.reps;
}

// ---- driver ----

struct CommandSpec {
  std::string name;
  std::string help;
  std::vector<Flag> flags;
  std::function<void(Context&)> run;
};

const std::vector<Flag> kSchemeFlags = {
    {"--kind", "model.kind", "covariance kind: XONLY, S, ST or STX"},
    {"--lag", "scheme.lag_minutes", "conditioning lag l (minutes)"},
    {"--width", "scheme.width_minutes", "conditioning window width m (minutes)"},
    {"--max-size", "scheme.max_size", "maximum conditioning set size"},
    {"--mode", "scheme.mode", "lag_window or k_nearest_time"},
    {"--closed-left", "scheme.closed_left", "admit observations exactly l minutes earlier"},
    {"--max-iters", "optimizer.max_iters", "simplex iterations per start"},
    {"--rel-tol", "optimizer.rel_tol", "simplex relative tolerance"},
    {"--restarts", "optimizer.restarts", "number of optimizer starts"},
    {"--k-retained", "features.k_retained", "principal components kept"},
    {"--k-computed", "features.k_computed", "principal components computed"},
    {"--utc-offset", "model.utc_offset_hours", "local time offset from UTC (hours)"},
};

std::vector<Flag> concat(std::vector<Flag> a, const std::vector<Flag>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<CommandSpec> commands() {
  const Flag obs{"--observations", "paths.observations", "observations CSV"};
  const Flag seg{"--segments", "paths.segments", "segments CSV"};
  const Flag model{"--model", "paths.model", "fitted model JSON"};
  const Flag train_start{"--train-start", "window.train_start", "training window start (ISO-8601)"};
  const Flag train_end{"--train-end", "window.train_end", "training window end (ISO-8601, exclusive)"};
  const Flag cond{"--cond-window", "forecast.cond_window_minutes", "conditioning window (minutes)"};
  const Flag offset{"--offset", "forecast.offset_minutes", "gap between window end and target (minutes)"};
  return {
      {"synth", "simulate a synthetic study area (samples, centerlines, covariates) into --out directory",
       {{"--days", "synth.days", "days simulated"},
        {"--cars", "synth.cars", "cars per day"},
        {"--kind", "synth.kind", "true covariance kind"},
        {"--sample-seconds", "synth.sample_seconds", "sampling period (s)"}},
       cmd_synth},
      {"segments", "split centerlines into road segments",
       {{"--centerlines", "paths.centerlines", "centerlines CSV"},
        {"--covariates", "paths.covariates", "covariate points CSV"},
        {"--interval", "ingest.interval_m", "segment length (m)"}},
       cmd_segments},
      {"snap", "assign samples to nearest segments",
       {{"--samples", "paths.samples", "samples CSV"}, seg, {"--max-snap", "ingest.max_snap_m", "maximum snap distance (m)"},
        {"--floor-ppb", "ingest.floor_ppb", "concentration floor (ppb)"}},
       cmd_snap},
      {"reduce", "block medians per car", {obs, {"--block-seconds", "ingest.block_seconds", "block length (s)"}}, cmd_reduce},
      {"fit", "two-step model fit", concat({obs, seg, train_start, train_end}, kSchemeFlags), cmd_fit},
      {"forecast", "h-minute-ahead forecast over segments",
       {model, obs, seg, cond, offset,
        {"--target-time", "forecast.target_time", "target time (ISO-8601)"},
        {"--horizon", "forecast.h_minutes", "horizon (minutes)"},
        {"--targets", "forecast.segments", "comma-separated segment ids (default all)"}},
       cmd_forecast},
      {"interpolate", "spatial kriging from nearest archive observations",
       {model, obs, seg, train_start, train_end,
        {"--time", "interpolate.time", "prediction time (ISO-8601)"},
        {"--neighbors", "interpolate.k", "nearest neighbours"},
        {"--targets", "forecast.segments", "comma-separated segment ids (default all)"}},
       cmd_interpolate},
      {"crossval", "train/test cross-validation over kinds and horizons",
       concat({obs, seg, train_start, train_end, cond, offset,
               {"--test-start", "window.test_start", "test window start"},
               {"--test-end", "window.test_end", "test window end (exclusive)"},
               {"--kinds", "crossval.kinds", "comma-separated kinds"},
               {"--lags", "crossval.lags", "comma-separated lags for ST/STX"},
               {"--horizons", "crossval.horizons", "comma-separated horizons (minutes)"}},
              kSchemeFlags),
       cmd_crossval},
      {"carab", "predict each car from the other car's same-day data", {model, obs, seg}, cmd_carab},
      {"sliding-window", "weekly refits on the previous w weeks",
       concat({obs, seg, cond, offset,
               {"--window-weeks", "sliding.window_weeks", "training weeks"},
               {"--horizon", "sliding.horizon_minutes", "forecast horizon (minutes)"}},
              kSchemeFlags),
       cmd_sliding},
      {"bootstrap", "day-resampling bootstrap of covariance parameters",
       concat({obs, seg, {"--window-weeks", "bootstrap.window_weeks", "weeks resampled"},
               {"--reps", "bootstrap.reps", "bootstrap replicates"}},
              kSchemeFlags),
       cmd_bootstrap},
      {"design-sim", "mobile vs fixed monitor network comparison",
       {obs, seg, model,
        {"--kind", "model.kind", "covariance kind when no model is given"},
        {"--sigma2", "design.sigma2", "partial sill"},
        {"--tau2", "design.tau2", "nugget"},
        {"--theta-s", "design.theta_s", "spatial range (km)"},
        {"--theta-t", "design.theta_t", "temporal range (h)"},
        {"--theta-x", "design.theta_x", "covariate range"},
        {"--max-count", "design.max_count", "largest monitor count"},
        {"--reps", "design.reps", "draws per count"},
        {"--targets", "design.n_targets", "number of target segments"},
        {"--cap", "design.cap", "conditioning cap"},
        {"--sampling-seconds", "design.sampling_seconds", "monitor sampling period (s)"},
        {"--utc-offset", "model.utc_offset_hours", "local time offset from UTC (hours)"}},
       cmd_design},
      {"lag-sim", "AR/ARMA lag-regression simulation table",
       {{"--reps", "lagsim.reps", "replicates"},
        {"--n-train", "lagsim.n_train", "training length"},
        {"--n-test", "lagsim.n_test", "test length"},
        {"--thetas", "lagsim.thetas", "comma-separated MA coefficients"},
        {"--fit-lags", "lagsim.fit_lags", "comma-separated fit lags"},
        {"--horizons", "lagsim.horizons", "comma-separated horizons"},
        {"--intercept", "lagsim.intercept", "fit an intercept"}},
       cmd_lagsim},
  };
}

void write_error(const std::string& command, const std::string& message) {
  std::cerr << json{{"error", message}, {"command", command}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatiotemporal land-use regression with lagged Vecchia likelihoods"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  const auto specs = commands();
  struct Bound {
    CLI::App* sub;
    std::string config_path;
    std::map<std::string, std::string> values;
    std::string seed, workers, out;
  };
  std::vector<Bound> bound(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto& b = bound[i];
    b.sub = app.add_subcommand(specs[i].name, specs[i].help);
    b.sub->add_option("--config", b.config_path, "config file (key = value with [sections])");
    b.sub->add_option("--seed", b.seed, "random seed");
    b.sub->add_option("--workers", b.workers, "worker threads");
    b.sub->add_option("--out", b.out, "output path");
    for (const auto& f : specs[i].flags) b.sub->add_option(f.name, b.values[f.key], f.help);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string name = argc > 1 ? argv[1] : "";
    write_error(name, e.what());
    return 1;
  }

  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto& b = bound[i];
    if (!b.sub->parsed()) continue;
    Context ctx;
    ctx.command = specs[i].name;
    try {
      if (!b.config_path.empty()) ctx.cfg = RunConfig::load(b.config_path);
      for (const auto& f : specs[i].flags) {
        if (b.sub->count(f.name) > 0) ctx.cfg.set(f.key, b.values[f.key]);
      }
      if (!b.seed.empty()) ctx.cfg.set("run.seed", b.seed);
      if (!b.workers.empty()) ctx.cfg.set("run.workers", b.workers);
      if (!b.out.empty()) ctx.cfg.set("paths.out", b.out);
      if (ctx.workers() < 1) throw Error("workers must be at least 1");

      // Worker count and output location never change results, so they stay
      // out of the hash.
      RunConfig hashed;
      for (const auto& [k, v] : ctx.cfg.values()) {
        if (k != "run.workers" && k != "paths.out") hashed.set(k, v);
      }
      const RunConfig recorded = ctx.cfg;
      specs[i].run(ctx);

      json meta = {{"command", ctx.command}, {"version", kVersion}, {"config_hash", hex64(hashed.hash())},
                   {"seed", ctx.seed()}, {"config", recorded.values()}};
      for (auto& [k, v] : ctx.meta.items()) meta[k] = v;
      std::ofstream(ctx.outputs.stage(ctx.primary + ".meta.json")) << meta.dump(2) << "\n";
      ctx.outputs.commit();
      return 0;
    } catch (const std::exception& e) {
      ctx.outputs.discard();
      write_error(ctx.command, e.what());
      return 1;
    }
  }
  return 1;
}
