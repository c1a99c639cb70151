#pragma once

#include <vector>

#include <Eigen/Dense>

namespace hwsc::diagnostics {

/// Rank-normalised split R-hat of one scalar quantity; `chains` holds one
/// column per chain (equal lengths).
double split_rhat(const Eigen::MatrixXd& chains);

/// Rank-normalised bulk effective sample size (split chains, Geyer initial
/// monotone sequence).
double bulk_ess(const Eigen::MatrixXd& chains);

/// Plain (not rank-normalised) multi-chain ESS, used for Monte Carlo
/// standard errors of posterior means.
double ess(const Eigen::MatrixXd& chains);

/// Type-7 sample quantile, p in [0, 1].
double quantile(std::vector<double> values, double p);

}  // namespace hwsc::diagnostics
