#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "hwsc/rng.hpp"

namespace hwsc::hmc {

/// Returns log density at x and writes its gradient into `grad` (resized by
/// the callee). Must be safe to call concurrently.
using LogDensity = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct Options {
  int iters = 5000;   // per chain, warmup included
  int warmup = 1000;
  int leapfrog_steps = 32;
  double target_accept = 0.8;
  double step_jitter = 0.2;      // each trajectory uses step * U(1 - j, 1 + j)
  double init_radius = 2.0;      // uniform(-r, r) initialisation on the unconstrained scale
  double max_energy_error = 1000.0;
  int workers = 1;               // threads used to run chains

  void validate() const;
};

struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double logp = 0.0;
};

/// L leapfrog steps with diagonal inverse metric. `state.grad` and
/// `state.logp` must be current on entry and are current on exit.
void leapfrog(const LogDensity& f, PhasePoint& state, double step, const Eigen::VectorXd& inv_metric, int steps);

double hamiltonian(const PhasePoint& state, const Eigen::VectorXd& inv_metric);

struct ChainResult {
  Eigen::MatrixXd draws;  // (iters - warmup) x dim
  std::vector<double> logp;
  int divergences = 0;          // post-warmup
  int warmup_divergences = 0;
  double step_size = 0.0;
  Eigen::VectorXd inv_metric;
  double mean_accept = 0.0;     // post-warmup mean acceptance statistic
};

/// One chain: dual-averaging step size and windowed diagonal metric
/// adaptation during warmup, fixed-length trajectories throughout.
/// Divergent trajectories are rejected and counted.
ChainResult run_chain(const LogDensity& f, Eigen::VectorXd init, const Options& opts, Rng& rng);

/// `chains` independent chains seeded from derive_seed(seed, chain).
/// Initial points are drawn uniformly in [-init_radius, init_radius]^dim.
std::vector<ChainResult> run_chains(const LogDensity& f, int dim, int chains, const Options& opts,
                                    std::uint64_t seed);

}  // namespace hwsc::hmc
