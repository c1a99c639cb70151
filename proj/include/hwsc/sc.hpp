#pragma once

#include <vector>

#include <Eigen/Dense>

#include "hwsc/panel.hpp"

namespace hwsc::sc {

struct SolverOptions {
  double tol = 1e-10;  // relative duality-gap tolerance
  int max_iter = 100000;
  bool record_trace = false;
};

struct ScWeights {
  Eigen::VectorXd w;
  double objective = 0.0;  // pre-period SSE
  double gap = 0.0;        // Frank-Wolfe duality gap at w
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective after each iteration (if requested)
};

/// min_{w in simplex} ||y - X w||^2 by pairwise Frank-Wolfe with exact line
/// search, started at the uniform vector. Stops once the duality gap is
/// below tol * (1 + objective). Never throws on slow convergence; check
/// `converged`.
ScWeights fit_sc_weights(const Eigen::VectorXd& treated_pre, const Eigen::MatrixXd& donors_pre,
                         const SolverOptions& opts = {});

/// Y_post * w, one value per post day.
Eigen::VectorXd impute_counterfactual(const ScWeights& weights, const Eigen::MatrixXd& donors_post);

/// sum(observed) / sum(counterfactual) on the rate scale; log-scale inputs are
/// exponentiated first.
double relative_risk(const Eigen::VectorXd& observed_post, const Eigen::VectorXd& counterfactual_post, Scale scale);

struct ScFit {
  ScWeights weights;
  Eigen::VectorXd counterfactual_pre;
  Eigen::VectorXd counterfactual_post;
  double rmse_pre = 0.0;
};

ScFit fit_sc(const WindowSlice& slice, const SolverOptions& opts = {});

}  // namespace hwsc::sc
