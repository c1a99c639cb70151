#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hwsc/evalx.hpp"
#include "hwsc/hmc.hpp"
#include "hwsc/sasc.hpp"
#include "hwsc/simgen.hpp"

namespace hwsc::pipeline {

enum class Method { sasc, bsc, sc_ols };
Method parse_method(const std::string& s);
std::string to_string(Method m);
/// Row label in metric tables: "SA-SC", "SC" (Bayesian, non-spatial prior), "SC-OLS".
std::string table_label(Method m);

enum class DonorPolicy { buffered, contaminated };
DonorPolicy parse_donor_policy(const std::string& s);
std::string to_string(DonorPolicy p);

struct EstimatorConfig {
  int chains = 4;
  hmc::Options hmc{};
  sasc::DistanceScale distance_scale = sasc::DistanceScale::unit;
  bool relative_risk = true;
};

struct EpisodeFit {
  Method method = Method::sasc;
  Eigen::VectorXd point;  // pre then post; posterior medians for Bayesian fits
  Eigen::VectorXd mean;   // pre then post; posterior-mean-weight path
  Eigen::VectorXd lower;  // empty for sc-ols
  Eigen::VectorXd upper;
  Eigen::VectorXd weights;
  sasc::Diagnostics diagnostics;
  std::vector<double> rr_draws;  // Bayesian only
  double rr = 1.0;
  double log_rr_mean = 0.0;
  double log_rr_sd = 0.0;
  std::size_t t0 = 0;
};

/// Fits one treated unit. `distance_km` holds treated-to-donor distances.
EpisodeFit fit_episode(Method method, const WindowSlice& slice, const Eigen::VectorXd& distance_km,
                       const EstimatorConfig& est, std::uint64_t seed, Scale scale);

struct SimRunConfig {
  simgen::DgpConfig dgp{};
  int rows = 10;
  int cols = 10;
  std::uint64_t geo_seed = 20240601;
  int reps = 25;
  std::vector<simgen::Scenario> scenarios = simgen::all_scenarios();
  std::vector<Method> methods{Method::bsc, Method::sasc};
  /// buffered: donors within s0 steps of the treated set are dropped.
  DonorPolicy policy = DonorPolicy::buffered;
  int s0 = 2;
  EstimatorConfig estimator{};
  std::uint64_t fit_seed = 7;
  int workers = 1;
};

struct ReplicationLog {
  std::string scenario;
  int jj = 0;
  int year = 0;
  std::string focal_unit;
  std::size_t treated = 0;
  std::size_t fits = 0;
  std::size_t degraded = 0;
  std::size_t empty_pools = 0;
  double mean_donors = 0.0;
};

struct SimRunResult {
  evalx::ScenarioReport report;
  std::vector<ReplicationLog> replications;
};

using Progress = std::function<void(const ReplicationLog&)>;

/// simulate -> fit each treated unit with every method -> evaluate, over the
/// scenario x replication grid. Output does not depend on `workers`.
SimRunResult run_simulation_grid(const SimRunConfig& config, const Progress& progress = {});

struct RrExperimentResult {
  std::vector<evalx::MetaInput> episodes;
  evalx::MetaResult pooled;
};

/// Constant-effect experiment: every replication is one episode whose RRT
/// posterior (mean over its treated units) feeds the random-effects pool.
RrExperimentResult run_rr_experiment(const SimRunConfig& config, Method method, int episodes,
                                     bool knapp_hartung = false, const Progress& progress = {});

}  // namespace hwsc::pipeline
