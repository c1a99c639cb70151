#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hwsc/exposure.hpp"
#include "hwsc/geo.hpp"
#include "hwsc/panel.hpp"
#include "hwsc/rng.hpp"

namespace hwsc::simgen {

struct Scenario {
  bool spatial_dep = true;
  bool spillover = true;

  /// "none", "sp", "sd", "sd+sp"
  std::string name() const;
  /// Row label used in metric tables, e.g. "NoSD-Sp".
  std::string label() const;
  bool operator==(const Scenario&) const = default;
};

Scenario parse_scenario(const std::string& s);
/// Table order: NoSD-NoSp, NoSD-Sp, SD-NoSp, SD-Sp.
std::vector<Scenario> all_scenarios();

enum class EffectMode { multiplicative, additive_log };
EffectMode parse_effect_mode(const std::string& s);
std::string to_string(EffectMode m);

/// Synthetic calibration targets: log daily rate per 100k for unit i is
/// level + spatial_sd * z_i + unit_sd * e_i + day_sd * e_it, where z is a
/// SAR(target_varpi) field standardised to unit variance.
struct TargetConfig {
  double level = 0.8;
  double spatial_sd = 0.5;
  double unit_sd = 0.3;
  double day_sd = 0.1;
  double varpi = 0.8;
};

/// Seasonal sinusoid plus regional and local AR(1) noise, with a heatwave
/// bump centred on the sampled unit from the onset day.
struct HeatGenConfig {
  double base = 80.0;
  double seasonal_amp = 10.0;
  double lat_gradient = -1.5;  // per degree north of the box centre
  double regional_phi = 0.7;
  double regional_sd = 2.5;
  double local_phi = 0.5;
  double local_sd = 2.0;
  double bump = 14.0;
  double bump_radius = 1.3;  // multiples of the median nearest-neighbour distance
  int bump_days = 5;
};

struct DgpConfig {
  int G = 2;
  double varpi_alpha = 0.5;
  double varpi_b = 0.5;
  double sigma_alpha = 0.5;
  double sigma_b = 50.0;
  std::vector<double> phi_f{0.85, 0.85};
  std::vector<double> sigma_f{0.08, 0.08};
  double phi_gamma = 0.68;
  double sigma_gamma = 0.11;
  double rho_u = 0.2;
  double sigma_u = 0.15;
  double sigma_eps = 0.05;
  double tau0 = 5.7;
  double kappa = 0.65;
  std::vector<double> chi{0.70, 0.40};
  Scenario scenario{};
  EffectMode effect_mode = EffectMode::multiplicative;
  std::optional<double> constant_effect;  // replaces tau_0(exp(kappa h) - 1) on treated cells
  std::uint64_t seed_base = 61116;
  int pre_len = 20;
  int post_len = 10;
  int year_min = 2000;
  int year_max = 2016;
  int knn_k = 4;
  double knn_bandwidth = 0.5;
  TargetConfig target{};
  HeatGenConfig heat{};
  exposure::HeatwaveDefinition heatwave{};

  int T() const { return pre_len + post_len; }
  void validate() const;
};

/// Unit layout shared by all replications.
struct Geography {
  geo::SpatialIndex index;
  geo::AdjacencyGraph adjacency;
  geo::SeparationMatrix separation;
  geo::GeoWeightMatrix W;  // k-NN kernel weights

  std::size_t size() const { return index.size(); }
};

/// Jittered rows x cols lattice over a north-eastern lat/lon box with queen
/// contiguity.
Geography synthetic_geography(int rows, int cols, std::uint64_t seed, int knn_k = 4, double knn_bandwidth = 0.5);
Geography make_geography(geo::SpatialIndex index, geo::AdjacencyGraph adjacency, int knn_k = 4,
                         double knn_bandwidth = 0.5);

struct Baseline {
  Eigen::MatrixXd y00;    // N x T
  Eigen::VectorXd alpha;  // N
  Eigen::MatrixXd B;      // N x G
  Eigen::MatrixXd f;      // T x G
  Eigen::VectorXd delta;  // T
  Eigen::MatrixXd u;      // N x T
  Eigen::MatrixXd eps;    // N x T
};

/// Y(0,0) = alpha_i + delta_t + f_t'B_i + u_it + eps_it. With spatial
/// dependence switched off the SAR smoothing and error propagation are zero.
Baseline gen_baseline(const DgpConfig& config, const geo::GeoWeightMatrix& W, std::uint64_t seed);

/// tau_it = tau0 (exp(kappa h~_it) - 1) on masked cells, 1 elsewhere; h~ is
/// heat standardised by each unit's mean and sd over the first pre_len days.
Eigen::MatrixXd gen_treatment_effects(const Eigen::MatrixXd& heat, const exposure::TreatmentMask& mask,
                                      const DgpConfig& config);

/// For an untreated unit at separation s <= chi.size() from the treated set,
/// psi_jt = chi_s * mean of tau_it over treated units i at separation s that
/// are treated on day t. Everything else holds 1.
Eigen::MatrixXd gen_spillovers(const Eigen::MatrixXd& tau, const geo::SeparationMatrix& sep,
                               const std::vector<double>& chi, const exposure::TreatmentMask& mask);

struct Calibration {
  Eigen::MatrixXd shifted;
  Eigen::VectorXd shifts;
};

/// r_i = mean over the first pre_len days of (log target - y00).
Calibration calibrate_levels(const Eigen::MatrixXd& y00, const Eigen::MatrixXd& target_rates, int pre_len);

Eigen::MatrixXd synthetic_targets(const Geography& geo, const TargetConfig& config, int days, Rng& rng);

/// Heat over `days` for every unit; the bump starts at day index `onset`.
Eigen::MatrixXd synthetic_heat(const Geography& geo, const HeatGenConfig& config, const std::vector<Date>& days,
                               std::size_t focal_unit, std::size_t onset, Rng& rng);

enum class CellClass : std::uint8_t { clean = 0, treated = 1, spillover = 2 };

struct SimulatedPanel {
  Panel panel;                // observed log-rates with heat
  Eigen::MatrixXd y00{};        // calibrated ground truth
  Eigen::MatrixXd tau{};
  Eigen::MatrixXd psi{};
  Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> cells{};  // CellClass
  exposure::TreatmentMask mask{};
  std::vector<std::size_t> treated{};  // N_1, sorted
  std::size_t focal_unit = 0;
  std::size_t t0 = 0;
  int year = 0;
  int jj = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd shifts{};
};

/// Observed outcome under the case system.
double observe(double y00, double effect, EffectMode mode);

/// Optional observed heat: a panel covering every warm season that may be
/// sampled. Without it the synthetic generator is used.
struct HeatInput {
  const Panel* observed = nullptr;
};

/// One Monte Carlo dataset with seed seed_base + jj.
SimulatedPanel run_replication(const DgpConfig& config, const Geography& geo, const HeatInput& heat, int jj);

std::string ground_truth_csv(const SimulatedPanel& sim);

}  // namespace hwsc::simgen
