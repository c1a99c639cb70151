#include "hwsc/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

#include "hwsc/donor.hpp"
#include "hwsc/error.hpp"
#include "hwsc/sc.hpp"

namespace hwsc::pipeline {

Method parse_method(const std::string& s) {
  if (s == "sasc") return Method::sasc;
  if (s == "bsc") return Method::bsc;
  if (s == "sc-ols" || s == "sc_ols") return Method::sc_ols;
  throw Error(ErrorCode::InvalidArgument, "method must be sasc, bsc or sc-ols");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::sasc: return "sasc";
    case Method::bsc: return "bsc";
    case Method::sc_ols: return "sc-ols";
  }
  return "?";
}

std::string table_label(Method m) {
  switch (m) {
    case Method::sasc: return "SA-SC";
    case Method::bsc: return "SC";
    case Method::sc_ols: return "SC-OLS";
  }
  return "?";
}

DonorPolicy parse_donor_policy(const std::string& s) {
  if (s == "buffered") return DonorPolicy::buffered;
  if (s == "contaminated") return DonorPolicy::contaminated;
  throw Error(ErrorCode::InvalidArgument, "donor policy must be buffered or contaminated");
}

std::string to_string(DonorPolicy p) { return p == DonorPolicy::buffered ? "buffered" : "contaminated"; }

namespace {

Eigen::VectorXd stack(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd out(a.size() + b.size());
  out << a, b;
  return out;
}

template <class Job>
void run_jobs(std::size_t n, int workers, Job&& job) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto loop = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        job(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const int w = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (w == 1) {
    loop();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < w; ++i) pool.emplace_back(loop);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::uint64_t fit_seed_for(std::uint64_t base, int jj, std::size_t unit, Method m) {
  return derive_seed(derive_seed(derive_seed(base, static_cast<std::uint64_t>(jj)), unit),
                     static_cast<std::uint64_t>(m));
}

struct UnitFits {
  std::size_t unit = 0;
  std::vector<EpisodeFit> fits;  // one per method, in config order
  std::size_t donors = 0;
};

struct ReplicationFits {
  simgen::SimulatedPanel sim;
  std::vector<UnitFits> units;
  ReplicationLog log;
};

ReplicationFits fit_replication(const SimRunConfig& config, const simgen::Geography& geo,
                                const simgen::DgpConfig& dgp, int jj, const std::vector<Method>& methods) {
  ReplicationFits out{simgen::run_replication(dgp, geo, {}, jj), {}, {}};
  const auto& sim = out.sim;
  out.log.scenario = dgp.scenario.label();
  out.log.jj = jj;
  out.log.year = sim.year;
  out.log.focal_unit = sim.panel.units()[sim.focal_unit];
  out.log.treated = sim.treated.size();

  donor::Buffer buffer;
  if (config.policy == DonorPolicy::buffered) buffer = donor::SeparationBuffer{config.s0};
  const auto pre = static_cast<std::size_t>(dgp.pre_len), post = static_cast<std::size_t>(dgp.post_len);
  double donor_sum = 0.0;
  for (auto unit : sim.treated) {
    const EpisodeWindow window{unit, sim.t0, pre, post};
    donor::DonorPool pool;
    try {
      pool = donor::eligible_donors(sim.mask, window, buffer, &geo.separation, nullptr);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyPool) throw;
      ++out.log.empty_pools;
      continue;
    }
    const auto slice = slice_window(sim.panel, window, pool.donors);
    Eigen::VectorXd dist(static_cast<Eigen::Index>(pool.donors.size()));
    for (std::size_t j = 0; j < pool.donors.size(); ++j) dist[static_cast<Eigen::Index>(j)] = geo.index.distance(unit, pool.donors[j]);
    UnitFits uf{unit, {}, pool.donors.size()};
    donor_sum += static_cast<double>(pool.donors.size());
    for (auto m : methods) {
      auto fit = fit_episode(m, slice, dist, config.estimator, fit_seed_for(config.fit_seed, jj, unit, m),
                             sim.panel.scale());
      ++out.log.fits;
      if (fit.diagnostics.degraded) ++out.log.degraded;
      uf.fits.push_back(std::move(fit));
    }
    out.units.push_back(std::move(uf));
  }
  out.log.mean_donors = out.units.empty() ? 0.0 : donor_sum / static_cast<double>(out.units.size());
  return out;
}

}  // namespace

EpisodeFit fit_episode(Method method, const WindowSlice& slice, const Eigen::VectorXd& distance_km,
                       const EstimatorConfig& est, std::uint64_t seed, Scale scale) {
  EpisodeFit out;
  out.method = method;
  out.t0 = static_cast<std::size_t>(slice.treated_pre.size());
  if (method == Method::sc_ols) {
    const auto fit = sc::fit_sc(slice);
    out.point = stack(fit.counterfactual_pre, fit.counterfactual_post);
    out.mean = out.point;
    out.weights = fit.weights.w;
    if (est.relative_risk) {
      out.rr = sc::relative_risk(slice.treated_post, fit.counterfactual_post, scale);
      out.log_rr_mean = std::log(out.rr);
    }
    return out;
  }
  const auto data = sasc::make_data(slice, distance_km, est.distance_scale);
  const auto prior = method == Method::sasc ? sasc::Prior::spatial : sasc::Prior::non_spatial;
  const sasc::SamplerConfig cfg{est.chains, est.hmc, seed};
  const auto draws = sasc::sample_posterior(data, prior, cfg);
  const auto fit = sasc::posterior_predictive(draws, data);
  out.point = stack(fit.pre.median, fit.post.median);
  out.mean = stack(fit.pre.point, fit.post.point);
  out.lower = stack(fit.pre.lower, fit.post.lower);
  out.upper = stack(fit.pre.upper, fit.post.upper);
  out.weights = fit.mean_weights;
  out.diagnostics = fit.diagnostics;
  if (!est.relative_risk) return out;
  auto rr = sasc::relative_risk_posterior(fit, slice.treated_post, scale);
  out.rr = rr.median;
  out.log_rr_mean = rr.log_mean;
  out.log_rr_sd = rr.log_sd;
  out.rr_draws = std::move(rr.draws);
  return out;
}

SimRunResult run_simulation_grid(const SimRunConfig& config, const Progress& progress) {
  if (config.reps < 1) throw Error(ErrorCode::InvalidArgument, "reps must be >= 1");
  if (config.methods.empty() || config.scenarios.empty()) throw Error(ErrorCode::InvalidArgument, "empty grid");
  const auto geo = simgen::synthetic_geography(config.rows, config.cols, config.geo_seed, config.dgp.knn_k,
                                               config.dgp.knn_bandwidth);
  auto grid_config = config;
  grid_config.estimator.relative_risk = false;
  const std::size_t S = config.scenarios.size(), R = static_cast<std::size_t>(config.reps);
  std::vector<std::vector<evalx::ImputedPath>> paths(S * config.methods.size());
  std::vector<ReplicationLog> logs(S * R);
  std::vector<std::vector<std::vector<evalx::ImputedPath>>> per_job(S * R);
  std::mutex progress_mutex;

  run_jobs(S * R, config.workers, [&](std::size_t k) {
    auto dgp = config.dgp;
    dgp.scenario = config.scenarios[k / R];
    const int jj = static_cast<int>(k % R);
    auto rf = fit_replication(grid_config, geo, dgp, jj, config.methods);
    auto& job_paths = per_job[k];
    job_paths.resize(config.methods.size());
    for (const auto& uf : rf.units) {
      const Eigen::VectorXd truth = rf.sim.y00.row(static_cast<Eigen::Index>(uf.unit)).transpose();
      for (std::size_t m = 0; m < uf.fits.size(); ++m) {
        const auto& f = uf.fits[m];
        job_paths[m].push_back({f.point, f.lower, f.upper, truth, f.t0});
      }
    }
    logs[k] = rf.log;
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(rf.log);
    }
  });

  for (std::size_t k = 0; k < S * R; ++k) {
    const auto s = k / R;
    for (std::size_t m = 0; m < config.methods.size(); ++m) {
      auto& dst = paths[s * config.methods.size() + m];
      dst.insert(dst.end(), per_job[k][m].begin(), per_job[k][m].end());
    }
  }

  std::vector<evalx::MetricsRow> rows;
  std::vector<std::string> scen_labels, method_labels;
  for (const auto& sc : config.scenarios) scen_labels.push_back(sc.label());
  for (auto m : config.methods) method_labels.push_back(table_label(m));
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t m = 0; m < config.methods.size(); ++m) {
      const auto& p = paths[s * config.methods.size() + m];
      if (p.empty()) continue;
      rows.push_back(evalx::imputation_metrics(p, scen_labels[s], method_labels[m]));
    }
  }
  return {evalx::scenario_report(rows, scen_labels, method_labels), std::move(logs)};
}

RrExperimentResult run_rr_experiment(const SimRunConfig& config, Method method, int episodes, bool knapp_hartung,
                                     const Progress& progress) {
  if (episodes < 1) throw Error(ErrorCode::InvalidArgument, "episodes must be >= 1");
  if (method == Method::sc_ols) throw Error(ErrorCode::InvalidArgument, "the RR experiment needs a Bayesian method");
  const auto geo = simgen::synthetic_geography(config.rows, config.cols, config.geo_seed, config.dgp.knn_k,
                                               config.dgp.knn_bandwidth);
  auto dgp = config.dgp;
  dgp.scenario = config.scenarios.front();
  std::vector<std::optional<evalx::MetaInput>> inputs(static_cast<std::size_t>(episodes));
  std::mutex progress_mutex;

  run_jobs(inputs.size(), config.workers, [&](std::size_t k) {
    const int jj = static_cast<int>(k);
    auto rf = fit_replication(config, geo, dgp, jj, {method});
    if (rf.units.empty()) return;
    std::vector<double> agg(rf.units.front().fits.front().rr_draws.size(), 0.0);
    for (const auto& uf : rf.units) {
      const auto& d = uf.fits.front().rr_draws;
      if (d.size() != agg.size()) throw Error(ErrorCode::DimensionMismatch, "fits have different draw counts");
      for (std::size_t i = 0; i < d.size(); ++i) agg[i] += d[i] / static_cast<double>(rf.units.size());
    }
    const auto summary = sasc::summarize_rr(std::move(agg));
    inputs[k] = evalx::MetaInput{summary.log_mean, summary.log_sd * summary.log_sd};
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(rf.log);
    }
  });

  RrExperimentResult out;
  for (const auto& in : inputs)
    if (in) out.episodes.push_back(*in);
  if (out.episodes.empty()) throw Error(ErrorCode::EmptyPool, "no episode could be fitted");
  out.pooled = evalx::dl_meta(out.episodes, knapp_hartung);
  return out;
}

}  // namespace hwsc::pipeline
