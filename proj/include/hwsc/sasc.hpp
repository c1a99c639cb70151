#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hwsc/hmc.hpp"
#include "hwsc/panel.hpp"

namespace hwsc::sasc {

enum class DistanceScale { unit, km };
enum class Prior { spatial, non_spatial };

DistanceScale parse_distance_scale(const std::string& s);
std::string to_string(Prior p);

/// Observed data for one treated unit: its pre-period outcomes, the donor
/// outcome matrices and treated-to-donor distances.
struct SascData {
  Eigen::VectorXd y_pre;   // |T-|
  Eigen::MatrixXd Y_pre;   // |T-| x J
  Eigen::MatrixXd Y_post;  // |T+| x J
  Eigen::VectorXd d;       // J, already scaled

  std::size_t donors() const { return static_cast<std::size_t>(Y_pre.cols()); }
  void validate() const;
};

/// Builds model data from a window slice. With DistanceScale::unit the
/// distances are divided by their maximum.
SascData make_data(const WindowSlice& slice, const Eigen::VectorXd& distance_km, DistanceScale scale);

/// omega_j = exp(eta_j - mean(eta)) / sum_k exp(eta_k - mean(eta)).
Eigen::VectorXd softmax_centered(const Eigen::VectorXd& eta);

/// Constrained parameters.
struct SascParams {
  Eigen::VectorXd eta;
  double sigma = 1.0;
  double tau_eta = 1.0;
  double varsigma = 0.0;  // zero under the non-spatial prior
};

/// Hierarchical synthetic-control model
///   y_pre ~ N(Y_pre omega, sigma^2 I),  omega = softmax(eta - mean(eta)),
///   eta_j ~ N(-varsigma d_j, tau_eta^2),
///   sigma, tau_eta, varsigma ~ half-normal(0, 1).
/// Sampling uses the non-centred form eta = -varsigma d + tau_eta z with
/// z ~ N(0, I); the unconstrained vector is (z, log sigma, log tau_eta[, log varsigma]).
class Model {
 public:
  Model(SascData data, Prior prior);

  int dim() const;
  Prior prior() const { return prior_; }
  const SascData& data() const { return data_; }

  /// Log joint density (up to a constant, including log-Jacobian terms) and
  /// its gradient on the unconstrained scale.
  double log_posterior(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const;
  double log_posterior(const Eigen::VectorXd& theta) const;

  SascParams unpack(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd weights(const Eigen::VectorXd& theta) const;

 private:
  SascData data_;
  Prior prior_;
};

/// The same hierarchy with eta_j ~ N(0, tau_eta^2).
Model disable_spatial_prior(const SascData& data);

struct SamplerConfig {
  int chains = 4;
  hmc::Options hmc{};
  std::uint64_t seed = 0;
};

struct Diagnostics {
  double max_rhat = 1.0;
  double min_ess = 0.0;
  int divergences = 0;
  int draws = 0;
  bool degraded = false;
};

struct PosteriorDraws {
  Prior prior = Prior::spatial;
  std::vector<hmc::ChainResult> chains;
  Eigen::MatrixXd weights;  // draws x J, chains stacked in order
  Eigen::VectorXd sigma;
  Eigen::VectorXd tau_eta;
  Eigen::VectorXd varsigma;
  Diagnostics diagnostics;
  std::uint64_t seed = 0;
};

PosteriorDraws sample_posterior(const Model& model, const SamplerConfig& config);
PosteriorDraws sample_posterior(const SascData& data, Prior prior, const SamplerConfig& config);

Diagnostics diagnose(const std::vector<hmc::ChainResult>& chains);

/// Per-day summary of a predictive distribution.
struct PathSummary {
  Eigen::VectorXd point;   // sum_j mean(omega_j) Y_jt
  Eigen::VectorXd median;
  Eigen::VectorXd lower;   // 2.5%
  Eigen::VectorXd upper;   // 97.5%
  Eigen::MatrixXd draws;   // draws x days
};

struct SascFit {
  Prior prior = Prior::spatial;
  Eigen::VectorXd mean_weights;
  PathSummary pre;
  PathSummary post;
  Diagnostics diagnostics;
};

/// For every retained draw, each day is drawn from N(Y omega, sigma^2).
SascFit posterior_predictive(const PosteriorDraws& draws, const SascData& data);

struct RrSummary {
  double mean = 1.0;
  double median = 1.0;
  double lower = 1.0;
  double upper = 1.0;
  double log_mean = 0.0;
  double log_sd = 0.0;
  std::vector<double> draws;
};

RrSummary summarize_rr(std::vector<double> draws);

/// Posterior of sum(observed)/sum(counterfactual) over the post window, one
/// value per predictive draw.
RrSummary relative_risk_posterior(const SascFit& fit, const Eigen::VectorXd& observed_post, Scale scale);

/// Mean over treated units of the per-unit relative risk, draw by draw.
RrSummary aggregate_rrt(const std::vector<SascFit>& fits, const std::vector<Eigen::VectorXd>& observed_post,
                        Scale scale);

}  // namespace hwsc::sasc
