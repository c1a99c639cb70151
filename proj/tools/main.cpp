// hwsc: heatwave synthetic-control command line.
//
// Exit codes: 0 success, 1 estimation degraded, 2 input or validation error,
// 3 unexpected internal failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "hwsc/csv.hpp"
#include "hwsc/donor.hpp"
#include "hwsc/error.hpp"
#include "hwsc/evalx.hpp"
#include "hwsc/exposure.hpp"
#include "hwsc/geo.hpp"
#include "hwsc/panel.hpp"
#include "hwsc/pipeline.hpp"
#include "hwsc/sasc.hpp"
#include "hwsc/simgen.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace hwsc;
using cli::json;

namespace {

constexpr int kOk = 0, kDegraded = 1, kInputError = 2, kInternal = 3;

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::pair<unsigned, unsigned> parse_month_day(const std::string& s) {
  unsigned m = 0, d = 0;
  if (std::sscanf(s.c_str(), "%u-%u", &m, &d) != 2 || m < 1 || m > 12 || d < 1 || d > 31) {
    throw Error(ErrorCode::InvalidArgument, "expected MM-DD, got '" + s + "'");
  }
  return {m, d};
}

// ---------------------------------------------------------------- detect

struct DetectArgs {
  std::string panel;
  double percentile = 95.0;
  int min_duration = 2;
  std::string reference = "per-year";
  std::string season_start = "05-01";
  std::string season_end = "09-30";
  bool all_episodes = false;
  std::string out = "detect_out";
};

int cmd_detect(const DetectArgs& a, const CLI::App& sub) {
  const auto panel = read_panel_csv(a.panel);
  if (!panel.heat()) throw Error(ErrorCode::InvalidArgument, "panel has no heat column");
  exposure::HeatwaveDefinition def;
  def.percentile = a.percentile;
  def.min_duration = a.min_duration;
  def.reference = exposure::parse_reference(a.reference);
  std::tie(def.season.start_month, def.season.start_day) = parse_month_day(a.season_start);
  std::tie(def.season.end_month, def.season.end_day) = parse_month_day(a.season_end);
  def.validate();

  auto det = exposure::detect_heatwaves(panel, def);
  auto episodes = a.all_episodes ? det.episodes : exposure::first_of_season(det.episodes, panel.days(), def.season);
  const auto mask = exposure::mask_from_episodes(episodes, panel.n_units(), panel.n_times());

  const fs::path out(a.out);
  csv::write_file(out / "episodes.csv", exposure::episodes_to_csv(episodes, panel));
  std::ostringstream m;
  m << "unit_id,date,z\n";
  for (std::size_t i = 0; i < panel.n_units(); ++i)
    for (std::size_t t = 0; t < panel.n_times(); ++t)
      m << panel.units()[i] << ',' << format_date(panel.days()[t]) << ','
        << int(mask(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t))) << '\n';
  csv::write_file(out / "mask.csv", m.str());

  cli::Manifest man{"detect", cli::resolved_options(sub), json::object(), {a.panel}, {"episodes.csv", "mask.csv"}};
  man.extra["episodes_detected"] = det.episodes.size();
  man.extra["episodes_kept"] = episodes.size();
  man.write(out);
  spdlog::info("detect: {} episodes ({} before first-of-season)", episodes.size(), det.episodes.size());
  return kOk;
}

// ---------------------------------------------------------------- shared episode inputs

struct PoolArgs {
  std::string panel;
  std::string episodes;
  std::string centroids;
  std::string adjacency;
  std::string covariates;
  std::string scale = "raw";
  bool log_transform = false;
  int window = 5;
  bool smooth_all = false;
  int pre = 60;
  int post = 0;  // 0: episode length
  bool exclude_onset = false;
  std::optional<int> s0;
  std::optional<double> buffer_km;
  int screen_k = 0;
};

void add_pool_options(CLI::App* sub, PoolArgs& a) {
  sub->add_option("--panel", a.panel, "Panel CSV: unit_id,date,outcome[,heat][,population]")->required();
  sub->add_option("--episodes", a.episodes, "Episodes CSV: unit_id,start_date,length_days")->required();
  sub->add_option("--centroids", a.centroids, "Centroids CSV: unit_id,lat,lon");
  sub->add_option("--adjacency", a.adjacency, "Contiguity edge list: unit_a,unit_b");
  sub->add_option("--covariates", a.covariates, "Per-unit covariates CSV for screening");
  sub->add_option("--scale", a.scale, "Outcome scale: raw, log, simulated_log_rate");
  sub->add_flag("--log-transform", a.log_transform, "Impute zero rates and take logs before fitting");
  sub->add_option("--window", a.window, "Rolling window for zero-rate imputation");
  sub->add_flag("--smooth-all", a.smooth_all, "Smooth every day, not only zero cells");
  sub->add_option("--pre", a.pre, "Pre-treatment days");
  sub->add_option("--post", a.post, "Post days (0: episode length)");
  sub->add_flag("--exclude-onset-day", a.exclude_onset, "Start the post window one day after onset");
  auto* s0 = sub->add_option("--s0", a.s0, "Contiguity buffer degree");
  auto* km = sub->add_option("--buffer-km", a.buffer_km, "Metric buffer radius in km");
  s0->excludes(km);
  sub->add_option("--screen-k", a.screen_k, "Keep the K closest donors by Mahalanobis distance (0: off)");
}

struct EpisodeInputs {
  Panel panel;
  std::vector<exposure::HeatwaveEpisode> episodes;
  exposure::TreatmentMask mask;
  std::optional<geo::SpatialIndex> index;
  std::optional<geo::SeparationMatrix> sep;
  std::optional<CovariateTable> covariates;
  donor::Buffer buffer;
  std::vector<std::string> files;
};

EpisodeInputs load_inputs(const PoolArgs& a) {
  auto panel = read_panel_csv(a.panel, parse_scale(a.scale));
  if (a.log_transform) panel = log_transform_rates(panel, a.window, a.smooth_all);
  EpisodeInputs in{panel, exposure::read_episodes_csv(a.episodes, panel), {}, {}, {}, {}, {}, {a.panel, a.episodes}};
  in.mask = exposure::mask_from_episodes(in.episodes, panel.n_units(), panel.n_times());
  if (!a.centroids.empty()) {
    in.index = geo::read_centroids_csv(a.centroids).aligned_to(panel.units());
    in.files.push_back(a.centroids);
  }
  if (!a.adjacency.empty()) {
    in.sep = geo::degrees_of_separation(geo::read_adjacency_csv(a.adjacency, panel.units()));
    in.files.push_back(a.adjacency);
  }
  if (!a.covariates.empty()) {
    in.covariates = read_covariates_csv(a.covariates).aligned_to(panel.units());
    in.files.push_back(a.covariates);
  }
  if (a.s0) {
    if (!in.sep) throw Error(ErrorCode::InvalidArgument, "--s0 needs --adjacency");
    in.buffer = donor::SeparationBuffer{*a.s0};
  } else if (a.buffer_km) {
    if (!in.index) throw Error(ErrorCode::InvalidArgument, "--buffer-km needs --centroids");
    in.buffer = donor::DistanceBuffer{*a.buffer_km};
  }
  return in;
}

EpisodeWindow window_for(const exposure::HeatwaveEpisode& e, const PoolArgs& a) {
  EpisodeWindow w{e.unit, e.start, static_cast<std::size_t>(a.pre), a.post > 0 ? static_cast<std::size_t>(a.post) : e.length};
  if (a.exclude_onset) {
    ++w.t0;
    if (a.post == 0) --w.post_len;
  }
  if (w.t0 < w.pre_len) throw Error(ErrorCode::WindowOutOfRange, "pre window starts before the panel");
  return w;
}

donor::DonorPool build_pool(const EpisodeInputs& in, const EpisodeWindow& w, int screen_k) {
  const Eigen::MatrixXd* dist = in.index ? &in.index->distances() : nullptr;
  auto pool = donor::eligible_donors(in.mask, w, in.buffer, in.sep ? &*in.sep : nullptr, dist);
  if (screen_k > 0) {
    Eigen::MatrixXd cov;
    if (in.covariates) {
      cov = in.covariates->values;
    } else {
      std::vector<Eigen::MatrixXd> series{in.panel.outcome()};
      if (in.panel.heat()) series.push_back(*in.panel.heat());
      cov = donor::pre_window_means(series, w);
    }
    pool = donor::mahalanobis_screen(pool, cov, in.panel.units(), screen_k);
    if (pool.screen_truncated) spdlog::warn("pool for {} smaller than K={}", in.panel.units()[w.treated_unit], screen_k);
  }
  return pool;
}

std::string episode_key(const EpisodeInputs& in, const exposure::HeatwaveEpisode& e) {
  return in.panel.units()[e.unit] + "_" + format_date(in.panel.days()[e.start]);
}

json skipped_json(const EpisodeInputs& in, const exposure::HeatwaveEpisode& e, const Error& err) {
  return {{"unit_id", in.panel.units()[e.unit]},
          {"start_date", format_date(in.panel.days()[e.start])},
          {"reason", std::string(to_string(err.code()))},
          {"message", err.what()}};
}

// ---------------------------------------------------------------- donors

struct DonorsArgs {
  PoolArgs pool;
  std::string out = "pools.json";
};

int cmd_donors(const DonorsArgs& a, const CLI::App& sub) {
  const auto in = load_inputs(a.pool);
  json report = json::array();
  json skipped = json::array();
  for (const auto& e : in.episodes) {
    try {
      const auto w = window_for(e, a.pool);
      w.validate(in.panel.n_times());
      const auto pool = build_pool(in, w, a.pool.screen_k);
      json j;
      j["unit_id"] = in.panel.units()[e.unit];
      j["window"] = {{"pre_start", format_date(in.panel.days()[w.begin()])},
                     {"t0", format_date(in.panel.days()[w.t0])},
                     {"post_end", format_date(in.panel.days()[w.end() - 1])}};
      j["kind"] = pool.kind == donor::PoolKind::standard ? "standard" : "spatial_buffered";
      j["screen_truncated"] = pool.screen_truncated;
      j["donors"] = json::array();
      for (std::size_t k = 0; k < pool.donors.size(); ++k) {
        json d{{"unit_id", in.panel.units()[pool.donors[k]]}};
        if (k < pool.proximity.size()) d[std::holds_alternative<donor::SeparationBuffer>(pool.buffer) ? "separation" : "distance_km"] = pool.proximity[k];
        if (in.index) d["centroid_km"] = in.index->distance(e.unit, pool.donors[k]);
        j["donors"].push_back(d);
      }
      report.push_back(j);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::EmptyPool && err.code() != ErrorCode::WindowOutOfRange) throw;
      skipped.push_back(skipped_json(in, e, err));
    }
  }
  json out{{"pools", report}, {"skipped", skipped}};
  const fs::path path(a.out);
  csv::write_file(path, out.dump(2) + "\n");
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  cli::Manifest man{"donors", cli::resolved_options(sub), json::object(),
                    std::vector<fs::path>(in.files.begin(), in.files.end()), {path.filename()}};
  man.write(dir);
  spdlog::info("donors: {} pools, {} skipped", report.size(), skipped.size());
  return kOk;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  PoolArgs pool;
  std::string method = "sasc";
  int chains = 4;
  int iters = 5000;
  int warmup = 1000;
  int leapfrog = 32;
  int workers = 1;
  std::uint64_t seed = 20240601;
  std::string distance_scale = "unit";
  std::string out = "fits";
};

int cmd_fit(const FitArgs& a, const CLI::App& sub) {
  const auto in = load_inputs(a.pool);
  const auto method = pipeline::parse_method(a.method);
  if (method != pipeline::Method::sc_ols && !in.index) {
    throw Error(ErrorCode::InvalidArgument, "Bayesian fits need --centroids for donor distances");
  }
  pipeline::EstimatorConfig est;
  est.chains = a.chains;
  est.hmc.iters = a.iters;
  est.hmc.warmup = a.warmup;
  est.hmc.leapfrog_steps = a.leapfrog;
  est.hmc.workers = a.workers;
  est.hmc.validate();
  est.distance_scale = sasc::parse_distance_scale(a.distance_scale);

  const fs::path out(a.out);
  std::vector<fs::path> outputs;
  json skipped = json::array();
  json seeds = json::object();
  std::ostringstream rr;
  rr << "unit_id,start_date,rr,lower,upper,log_rr,variance\n";
  std::size_t degraded = 0, fitted = 0;
  for (const auto& e : in.episodes) {
    const auto key = episode_key(in, e);
    try {
      const auto w = window_for(e, a.pool);
      w.validate(in.panel.n_times());
      const auto pool = build_pool(in, w, a.pool.screen_k);
      const auto slice = slice_window(in.panel, w, pool.donors);
      Eigen::VectorXd dist = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pool.donors.size()));
      if (in.index)
        for (std::size_t j = 0; j < pool.donors.size(); ++j) dist[static_cast<Eigen::Index>(j)] = in.index->distance(e.unit, pool.donors[j]);
      const auto seed = derive_seed(derive_seed(a.seed, e.unit), e.start);
      const auto fit = pipeline::fit_episode(method, slice, dist, est, seed, in.panel.scale());

      json j;
      j["unit_id"] = in.panel.units()[e.unit];
      j["start_date"] = format_date(in.panel.days()[e.start]);
      j["method"] = pipeline::to_string(method);
      j["t0"] = format_date(in.panel.days()[w.t0]);
      j["pre_len"] = w.pre_len;
      j["post_len"] = w.post_len;
      j["seed"] = seed;
      j["donors"] = json::array();
      for (auto d : pool.donors) j["donors"].push_back(in.panel.units()[d]);
      j["weights"] = vec_json(fit.weights);
      json path = json::array();
      const Eigen::VectorXd observed = (Eigen::VectorXd(slice.treated_pre.size() + slice.treated_post.size())
                                        << slice.treated_pre, slice.treated_post).finished();
      for (Eigen::Index t = 0; t < fit.point.size(); ++t) {
        json day{{"date", format_date(in.panel.days()[w.begin() + static_cast<std::size_t>(t)])},
                 {"observed", observed[t]},
                 {"point", fit.point[t]},
                 {"mean", fit.mean[t]}};
        if (fit.lower.size()) {
          day["lower"] = fit.lower[t];
          day["upper"] = fit.upper[t];
        }
        path.push_back(day);
      }
      j["counterfactual"] = path;
      json rrj{{"rr", fit.rr}, {"log_mean", fit.log_rr_mean}, {"log_sd", fit.log_rr_sd}};
      double lo = fit.rr, hi = fit.rr;
      if (!fit.rr_draws.empty()) {
        const auto s = sasc::summarize_rr(fit.rr_draws);
        lo = s.lower;
        hi = s.upper;
        rrj["mean"] = s.mean;
        rrj["lower"] = lo;
        rrj["upper"] = hi;
      }
      j["relative_risk"] = rrj;
      j["diagnostics"] = {{"max_rhat", fit.diagnostics.max_rhat},
                          {"min_ess", fit.diagnostics.min_ess},
                          {"divergences", fit.diagnostics.divergences},
                          {"draws", fit.diagnostics.draws},
                          {"degraded", fit.diagnostics.degraded}};
      j["config"] = cli::resolved_options(sub);
      const fs::path name = "fit_" + pipeline::to_string(method) + "_" + key + ".json";
      csv::write_file(out / name, j.dump(2) + "\n");
      outputs.push_back(name);
      seeds[key] = seed;
      rr << j["unit_id"].get<std::string>() << ',' << j["start_date"].get<std::string>() << ','
         << csv::format_double(fit.rr) << ',' << csv::format_double(lo) << ',' << csv::format_double(hi) << ','
         << csv::format_double(fit.log_rr_mean) << ','
         << (fit.rr_draws.empty() ? std::string("NA") : csv::format_double(fit.log_rr_sd * fit.log_rr_sd)) << '\n';
      ++fitted;
      if (fit.diagnostics.degraded) {
        ++degraded;
        spdlog::warn("{}: degraded (R-hat {:.3f}, ESS {:.0f}, {} divergences)", key, fit.diagnostics.max_rhat,
                     fit.diagnostics.min_ess, fit.diagnostics.divergences);
      }
    } catch (const Error& err) {
      if (err.code() == ErrorCode::ParseError || err.code() == ErrorCode::IoError) throw;
      spdlog::warn("{}: skipped ({})", key, err.what());
      skipped.push_back(skipped_json(in, e, err));
    }
  }
  const fs::path rr_name = "rr_" + pipeline::to_string(method) + ".csv";
  const fs::path skipped_name = "skipped_" + pipeline::to_string(method) + ".json";
  csv::write_file(out / rr_name, rr.str());
  csv::write_file(out / skipped_name, skipped.dump(2) + "\n");
  outputs.push_back(rr_name);
  outputs.push_back(skipped_name);
  cli::Manifest man{"fit-" + pipeline::to_string(method), cli::resolved_options(sub), {{"seed", a.seed}, {"episodes", seeds}},
                    std::vector<fs::path>(in.files.begin(), in.files.end()), outputs};
  man.extra["fitted"] = fitted;
  man.extra["skipped"] = skipped.size();
  man.extra["degraded"] = degraded;
  man.write(out, "manifest_" + pipeline::to_string(method) + ".json");
  spdlog::info("fit: {} fitted, {} skipped, {} degraded", fitted, skipped.size(), degraded);
  return degraded ? kDegraded : kOk;
}

// ---------------------------------------------------------------- simulate

struct DgpArgs {
  std::uint64_t seed = 61116;
  std::string effect_mode = "multiplicative";
  std::optional<double> constant_effect;
  double sigma_b = simgen::DgpConfig{}.sigma_b;
  int rows = 10;
  int cols = 10;
  std::uint64_t geo_seed = 20240601;
};

void add_dgp_options(CLI::App* sub, DgpArgs& a) {
  sub->add_option("--seed", a.seed, "Replication seed base (replication jj uses seed + jj)");
  sub->add_option("--effect-mode", a.effect_mode, "multiplicative (paper case system) or additive-log");
  sub->add_option("--constant-effect", a.constant_effect, "Replace the heat-driven effect with a constant");
  sub->add_option("--sigma-b", a.sigma_b, "Scale of the factor loadings");
  sub->add_option("--rows", a.rows, "Synthetic lattice rows");
  sub->add_option("--cols", a.cols, "Synthetic lattice columns");
  sub->add_option("--geo-seed", a.geo_seed, "Seed of the synthetic geography");
}

simgen::DgpConfig make_dgp(const DgpArgs& a) {
  simgen::DgpConfig d;
  d.seed_base = a.seed;
  d.effect_mode = simgen::parse_effect_mode(a.effect_mode);
  d.constant_effect = a.constant_effect;
  d.sigma_b = a.sigma_b;
  d.validate();
  return d;
}

std::string centroids_csv(const simgen::Geography& geo) {
  std::ostringstream os;
  os << "unit_id,lat,lon\n";
  for (std::size_t i = 0; i < geo.size(); ++i)
    os << geo.index.units()[i] << ',' << csv::format_double(geo.index.centroids()[i].lat) << ','
       << csv::format_double(geo.index.centroids()[i].lon) << '\n';
  return os.str();
}

std::string adjacency_csv(const simgen::Geography& geo) {
  std::ostringstream os;
  os << "unit_a,unit_b\n";
  for (std::size_t i = 0; i < geo.size(); ++i)
    for (auto j : geo.adjacency.neighbors(i))
      if (i < j) os << geo.index.units()[i] << ',' << geo.index.units()[j] << '\n';
  return os.str();
}

struct SimulateArgs {
  DgpArgs dgp;
  std::string scenario = "sd+sp";
  int reps = 100;
  std::string out = "sim";
};

int cmd_simulate(const SimulateArgs& a, const CLI::App& sub) {
  if (a.reps < 1) throw Error(ErrorCode::InvalidArgument, "--reps must be >= 1");
  auto dgp = make_dgp(a.dgp);
  dgp.scenario = simgen::parse_scenario(a.scenario);
  const auto geo = simgen::synthetic_geography(a.dgp.rows, a.dgp.cols, a.dgp.geo_seed, dgp.knn_k, dgp.knn_bandwidth);
  const fs::path out(a.out);
  std::vector<fs::path> outputs{"centroids.csv", "adjacency.csv"};
  csv::write_file(out / outputs[0], centroids_csv(geo));
  csv::write_file(out / outputs[1], adjacency_csv(geo));
  json reps = json::array();
  for (int jj = 0; jj < a.reps; ++jj) {
    const auto sim = simgen::run_replication(dgp, geo, {}, jj);
    char name[32];
    std::snprintf(name, sizeof name, "rep_%03d", jj);
    const fs::path rep(name);
    std::vector<exposure::HeatwaveEpisode> eps;
    for (auto u : sim.treated) eps.push_back({u, sim.t0, static_cast<std::size_t>(dgp.post_len)});
    csv::write_file(out / rep / "panel.csv", panel_to_csv(sim.panel));
    csv::write_file(out / rep / "truth.csv", simgen::ground_truth_csv(sim));
    csv::write_file(out / rep / "episodes.csv", exposure::episodes_to_csv(eps, sim.panel));
    for (const char* f : {"panel.csv", "truth.csv", "episodes.csv"}) outputs.push_back(rep / f);
    std::vector<std::string> treated;
    for (auto u : sim.treated) treated.push_back(sim.panel.units()[u]);
    reps.push_back({{"jj", jj}, {"seed", sim.seed}, {"year", sim.year},
                    {"focal_unit", sim.panel.units()[sim.focal_unit]}, {"treated", treated}});
  }
  cli::Manifest man{"simulate", cli::resolved_options(sub),
                    {{"seed_base", dgp.seed_base}, {"geo_seed", a.dgp.geo_seed}}, {}, outputs};
  man.extra["scenario_label"] = dgp.scenario.label();
  man.extra["replications"] = reps;
  man.write(out);
  spdlog::info("simulate: {} replications of {} in {}", a.reps, dgp.scenario.label(), out.string());
  return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string fits;
  std::string truth;
  std::string scenario;
  std::string out = "table.csv";
};

int cmd_evaluate(const EvaluateArgs& a, const CLI::App& sub) {
  const fs::path fits_dir(a.fits), truth_dir(a.truth);
  if (!fs::is_directory(fits_dir)) throw Error(ErrorCode::IoError, "not a directory: " + a.fits);
  std::string scenario = a.scenario;
  if (scenario.empty() && fs::exists(truth_dir / "manifest.json")) {
    std::ifstream f(truth_dir / "manifest.json");
    scenario = json::parse(f).value("scenario_label", "");
  }
  if (scenario.empty()) scenario = "observed";

  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(fits_dir)) {
    const auto& p = entry.path();
    if (entry.is_regular_file() && p.extension() == ".json" && p.filename().string().rfind("fit_", 0) == 0) files.push_back(p);
  }
  std::sort(files.begin(), files.end());

  std::map<fs::path, std::map<std::pair<std::string, std::string>, double>> truth_cache;
  auto truth_for = [&](const fs::path& rel_dir) -> const std::map<std::pair<std::string, std::string>, double>& {
    fs::path file = truth_dir / rel_dir / "truth.csv";
    if (!fs::exists(file)) file = truth_dir / "truth.csv";
    auto it = truth_cache.find(file);
    if (it != truth_cache.end()) return it->second;
    const auto table = csv::read_file(file);
    const auto cu = table.require_column("unit_id"), cd = table.require_column("date"), cy = table.require_column("y00");
    std::map<std::pair<std::string, std::string>, double> m;
    for (std::size_t r = 0; r < table.rows.size(); ++r)
      m[{table.rows[r][cu], table.rows[r][cd]}] = csv::parse_double(table.rows[r][cy], table.line_numbers[r]);
    return truth_cache.emplace(file, std::move(m)).first->second;
  };

  std::map<std::string, std::vector<evalx::ImputedPath>> by_method;
  std::vector<fs::path> inputs;
  for (const auto& file : files) {
    std::ifstream f(file);
    json j;
    try {
      j = json::parse(f);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, file.string() + ": " + e.what());
    }
    const auto& truth = truth_for(fs::relative(file.parent_path(), fits_dir));
    const auto unit = j.at("unit_id").get<std::string>();
    const auto t0 = j.at("t0").get<std::string>();
    const auto& cf = j.at("counterfactual");
    const auto T = static_cast<Eigen::Index>(cf.size());
    evalx::ImputedPath p;
    p.point.resize(T);
    p.truth.resize(T);
    const bool has_int = T > 0 && cf[0].contains("lower");
    if (has_int) {
      p.lower.resize(T);
      p.upper.resize(T);
    }
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto& day = cf[static_cast<std::size_t>(t)];
      const auto date = day.at("date").get<std::string>();
      auto it = truth.find({unit, date});
      if (it == truth.end()) throw Error(ErrorCode::Misalignment, file.string() + ": no truth for " + unit + " " + date);
      p.truth[t] = it->second;
      p.point[t] = day.at("point").get<double>();
      if (has_int) {
        p.lower[t] = day.at("lower").get<double>();
        p.upper[t] = day.at("upper").get<double>();
      }
      if (date == t0) p.t0 = static_cast<std::size_t>(t);
    }
    by_method[j.at("method").get<std::string>()].push_back(std::move(p));
    inputs.push_back(file);
  }
  std::vector<evalx::MetricsRow> rows;
  std::vector<std::string> methods;
  for (const auto& [m, paths] : by_method) {
    const auto label = pipeline::table_label(pipeline::parse_method(m));
    rows.push_back(evalx::imputation_metrics(paths, scenario, label));
    methods.push_back(label);
  }
  const auto report = evalx::scenario_report(rows, {scenario}, methods);
  const fs::path path(a.out);
  csv::write_file(path, evalx::report_csv(report));
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  cli::Manifest man{"evaluate", cli::resolved_options(sub), json::object(), inputs, {path.filename()}};
  man.write(dir);
  if (rows.empty()) {
    spdlog::error("evaluate: no fit artifacts under {}", a.fits);
    return kInputError;
  }
  std::cout << evalx::report_csv(report);
  return kOk;
}

// ---------------------------------------------------------------- pool

struct PoolCmdArgs {
  std::string inputs;
  bool knapp_hartung = false;
  std::string out;
};

int cmd_pool(const PoolCmdArgs& a, const CLI::App& sub) {
  const auto table = csv::read_file(a.inputs);
  const auto cl = table.require_column("log_rr");
  const int cv = table.column("variance");
  const int cs = table.column("log_sd");
  if (cv < 0 && cs < 0) throw Error(ErrorCode::ParseError, a.inputs + ": need a variance or log_sd column");
  std::vector<evalx::MetaInput> in;
  std::size_t dropped = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    const auto& vfield = cv >= 0 ? row[static_cast<std::size_t>(cv)] : row[static_cast<std::size_t>(cs)];
    if (vfield == "NA") {
      ++dropped;
      continue;
    }
    double v = csv::parse_double(vfield, line);
    if (cv < 0) v *= v;
    in.push_back({csv::parse_double(row[cl], line), v});
  }
  const auto res = evalx::dl_meta(in, a.knapp_hartung);
  json j{{"k", res.k},       {"rr", res.rr},   {"lower", res.lower}, {"upper", res.upper},
         {"log_rr", res.log_rr}, {"se", res.se}, {"tau2", res.tau2},   {"q", res.q},
         {"i2", res.i2},     {"knapp_hartung", res.knapp_hartung}, {"dropped_without_variance", dropped}};
  const auto text = j.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    const fs::path path(a.out);
    csv::write_file(path, text);
    const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
    cli::Manifest man{"pool", cli::resolved_options(sub), json::object(), {a.inputs}, {path.filename()}};
    man.write(dir);
  }
  return kOk;
}

// ---------------------------------------------------------------- pipeline-sim

struct PipelineArgs {
  DgpArgs dgp;
  int reps = 25;
  std::string scenarios = "all";
  std::string methods = "bsc,sasc";
  std::string donor_policy = "buffered";
  int s0 = 2;
  std::uint64_t fit_seed = 7;
  int workers = 1;
  int chains = 4;
  int iters = 1500;
  int warmup = 500;
  int leapfrog = 32;
  std::string distance_scale = "unit";
  int rr_episodes = 0;
  bool knapp_hartung = false;
  std::string out = "pipeline_out";
};

int cmd_pipeline_sim(const PipelineArgs& a, const CLI::App& sub) {
  pipeline::SimRunConfig c;
  c.dgp = make_dgp(a.dgp);
  c.rows = a.dgp.rows;
  c.cols = a.dgp.cols;
  c.geo_seed = a.dgp.geo_seed;
  c.reps = a.reps;
  if (a.scenarios != "all") {
    c.scenarios.clear();
    for (const auto& s : split_list(a.scenarios)) c.scenarios.push_back(simgen::parse_scenario(s));
  }
  c.methods.clear();
  for (const auto& m : split_list(a.methods)) c.methods.push_back(pipeline::parse_method(m));
  c.policy = pipeline::parse_donor_policy(a.donor_policy);
  c.s0 = a.s0;
  c.fit_seed = a.fit_seed;
  c.workers = a.workers;
  c.estimator.chains = a.chains;
  c.estimator.hmc.iters = a.iters;
  c.estimator.hmc.warmup = a.warmup;
  c.estimator.hmc.leapfrog_steps = a.leapfrog;
  c.estimator.hmc.validate();
  c.estimator.distance_scale = sasc::parse_distance_scale(a.distance_scale);

  auto log = [](const pipeline::ReplicationLog& l) {
    spdlog::info("{} jj={} year={} focal={} treated={} donors={:.1f} degraded={}/{}", l.scenario, l.jj, l.year,
                 l.focal_unit, l.treated, l.mean_donors, l.degraded, l.fits);
  };
  const fs::path out(a.out);
  std::vector<fs::path> outputs;
  std::size_t degraded = 0, fits = 0;
  const auto res = pipeline::run_simulation_grid(c, log);
  csv::write_file(out / "table.csv", evalx::report_csv(res.report));
  csv::write_file(out / "table.json", evalx::report_json(res.report));
  std::ostringstream reps;
  reps << "scenario,jj,year,focal_unit,treated,fits,degraded,empty_pools,mean_donors\n";
  for (const auto& l : res.replications) {
    reps << l.scenario << ',' << l.jj << ',' << l.year << ',' << l.focal_unit << ',' << l.treated << ',' << l.fits
         << ',' << l.degraded << ',' << l.empty_pools << ',' << csv::format_double(l.mean_donors) << '\n';
    degraded += l.degraded;
    fits += l.fits;
  }
  csv::write_file(out / "replications.csv", reps.str());
  outputs = {"table.csv", "table.json", "replications.csv"};

  json extra = json::object();
  if (a.rr_episodes > 0) {
    const auto method = c.methods.back() == pipeline::Method::sc_ols ? pipeline::Method::sasc : c.methods.back();
    const auto rr = pipeline::run_rr_experiment(c, method, a.rr_episodes, a.knapp_hartung, log);
    std::ostringstream rrc;
    rrc << "episode,log_rr,variance\n";
    for (std::size_t k = 0; k < rr.episodes.size(); ++k)
      rrc << k << ',' << csv::format_double(rr.episodes[k].log_rr) << ',' << csv::format_double(rr.episodes[k].variance) << '\n';
    csv::write_file(out / "rr.csv", rrc.str());
    const auto& p = rr.pooled;
    json pj{{"method", pipeline::to_string(method)}, {"k", p.k}, {"rr", p.rr}, {"lower", p.lower}, {"upper", p.upper},
            {"log_rr", p.log_rr}, {"se", p.se}, {"tau2", p.tau2}, {"q", p.q}, {"i2", p.i2}};
    csv::write_file(out / "pooled.json", pj.dump(2) + "\n");
    outputs.push_back("rr.csv");
    outputs.push_back("pooled.json");
  }
  extra["fits"] = fits;
  extra["degraded_fits"] = degraded;
  extra["complete"] = res.report.complete();
  extra["missing"] = res.report.missing;
  cli::Manifest man{"pipeline-sim", cli::resolved_options(sub),
                    {{"seed_base", c.dgp.seed_base}, {"fit_seed", c.fit_seed}, {"geo_seed", c.geo_seed}}, {}, outputs,
                    extra};
  man.write(out);
  std::cout << evalx::report_csv(res.report);
  if (!res.report.complete()) spdlog::warn("incomplete grid: {} missing cells", res.report.missing.size());
  if (degraded) spdlog::warn("{} of {} fits flagged degraded", degraded, fits);
  return degraded ? kDegraded : kOk;
}

int input_error_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::NonFiniteDensity:
    case ErrorCode::SingularSystem:
      return kInternal;
    default:
      return kInputError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heatwave synthetic-control toolkit"};
  app.set_config("--config", "", "TOML/INI file; [subcommand] sections mirror the flags, flags take precedence");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");

  DetectArgs detect;
  auto* s_detect = app.add_subcommand("detect", "Detect heatwave episodes from a heat panel");
  s_detect->add_option("--panel", detect.panel, "Panel CSV with a heat column")->required();
  s_detect->add_option("--percentile", detect.percentile, "Threshold percentile r");
  s_detect->add_option("--min-duration", detect.min_duration, "Minimum run length in days");
  s_detect->add_option("--reference", detect.reference, "per-year, whole-period, warm-season");
  s_detect->add_option("--season-start", detect.season_start, "Warm season start, MM-DD");
  s_detect->add_option("--season-end", detect.season_end, "Warm season end, MM-DD");
  s_detect->add_flag("--all-episodes", detect.all_episodes, "Keep every episode, not only the first of each season");
  s_detect->add_option("--out", detect.out, "Output directory");

  DonorsArgs donors;
  auto* s_donors = app.add_subcommand("donors", "Build donor pools for each episode");
  add_pool_options(s_donors, donors.pool);
  s_donors->add_option("--out", donors.out, "Pool report JSON");

  FitArgs fit;
  auto* s_fit = app.add_subcommand("fit", "Fit a synthetic control per episode");
  add_pool_options(s_fit, fit.pool);
  s_fit->add_option("--method", fit.method, "sasc, bsc or sc-ols");
  s_fit->add_option("--chains", fit.chains, "HMC chains (>= 2)");
  s_fit->add_option("--iters", fit.iters, "Iterations per chain, warmup included");
  s_fit->add_option("--warmup", fit.warmup, "Warmup iterations per chain");
  s_fit->add_option("--leapfrog", fit.leapfrog, "Leapfrog steps per trajectory");
  s_fit->add_option("--workers", fit.workers, "Threads for chains");
  s_fit->add_option("--seed", fit.seed, "Base seed");
  s_fit->add_option("--distance-scale", fit.distance_scale, "unit (divide by max) or km");
  s_fit->add_option("--out", fit.out, "Output directory");

  SimulateArgs simulate;
  auto* s_sim = app.add_subcommand("simulate", "Write simulated panels with ground truth");
  add_dgp_options(s_sim, simulate.dgp);
  s_sim->add_option("--scenario", simulate.scenario, "none, sp, sd, sd+sp");
  s_sim->add_option("--reps", simulate.reps, "Replications");
  s_sim->add_option("--out", simulate.out, "Output directory");

  EvaluateArgs evaluate;
  auto* s_eval = app.add_subcommand("evaluate", "Score fit artifacts against simulation truth");
  s_eval->add_option("--fits", evaluate.fits, "Directory of fit JSON files")->required();
  s_eval->add_option("--truth", evaluate.truth, "Simulation output directory")->required();
  s_eval->add_option("--scenario", evaluate.scenario, "Scenario label (default: from the truth manifest)");
  s_eval->add_option("--out", evaluate.out, "Metrics table CSV");

  PoolCmdArgs pool;
  auto* s_pool = app.add_subcommand("pool", "Random-effects pooling of episode relative risks");
  s_pool->add_option("--inputs", pool.inputs, "CSV with log_rr and variance (or log_sd)")->required();
  s_pool->add_flag("--knapp-hartung", pool.knapp_hartung, "Knapp-Hartung interval");
  s_pool->add_option("--out", pool.out, "Pooled summary JSON (default: stdout)");

  PipelineArgs pipe;
  auto* s_pipe = app.add_subcommand("pipeline-sim", "Simulate, fit and evaluate over the scenario grid");
  add_dgp_options(s_pipe, pipe.dgp);
  s_pipe->add_option("--reps", pipe.reps, "Replications per scenario");
  s_pipe->add_option("--scenarios", pipe.scenarios, "all or a comma list of none,sp,sd,sd+sp");
  s_pipe->add_option("--methods", pipe.methods, "Comma list of bsc,sasc,sc-ols");
  s_pipe->add_option("--donor-policy", pipe.donor_policy, "buffered or contaminated");
  s_pipe->add_option("--s0", pipe.s0, "Buffer degree for the buffered policy");
  s_pipe->add_option("--fit-seed", pipe.fit_seed, "Sampler seed base");
  s_pipe->add_option("--workers", pipe.workers, "Replications run in parallel");
  s_pipe->add_option("--chains", pipe.chains, "HMC chains");
  s_pipe->add_option("--iters", pipe.iters, "Iterations per chain, warmup included");
  s_pipe->add_option("--warmup", pipe.warmup, "Warmup iterations");
  s_pipe->add_option("--leapfrog", pipe.leapfrog, "Leapfrog steps per trajectory");
  s_pipe->add_option("--distance-scale", pipe.distance_scale, "unit or km");
  s_pipe->add_option("--rr-episodes", pipe.rr_episodes, "Also run the pooled relative-risk experiment");
  s_pipe->add_flag("--knapp-hartung", pipe.knapp_hartung, "Knapp-Hartung interval for the pooled RR");
  s_pipe->add_option("--out", pipe.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }
  spdlog::set_default_logger(spdlog::stderr_logger_st("hwsc"));
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*s_detect) return cmd_detect(detect, *s_detect);
    if (*s_donors) return cmd_donors(donors, *s_donors);
    if (*s_fit) return cmd_fit(fit, *s_fit);
    if (*s_sim) return cmd_simulate(simulate, *s_sim);
    if (*s_eval) return cmd_evaluate(evaluate, *s_eval);
    if (*s_pool) return cmd_pool(pool, *s_pool);
    if (*s_pipe) return cmd_pipeline_sim(pipe, *s_pipe);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return input_error_code(e.code());
  } catch (const json::exception& e) {
    spdlog::error("json: {}", e.what());
    return kInputError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kInternal;
  }
  return kInputError;
}
