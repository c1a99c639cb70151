#include "hwsc/sc.hpp"

#include <cmath>

#include "hwsc/error.hpp"

namespace hwsc::sc {

ScWeights fit_sc_weights(const Eigen::VectorXd& treated_pre, const Eigen::MatrixXd& donors_pre,
                         const SolverOptions& opts) {
  const auto J = donors_pre.cols();
  if (J < 1) throw Error(ErrorCode::EmptyPool, "synthetic control needs at least one donor");
  if (treated_pre.size() < 1 || donors_pre.rows() != treated_pre.size()) {
    throw Error(ErrorCode::DimensionMismatch, "treated pre series vs donor matrix");
  }
  if (!treated_pre.allFinite() || !donors_pre.allFinite()) throw Error(ErrorCode::NonFiniteValue, "sc inputs");

  const Eigen::MatrixXd G = donors_pre.transpose() * donors_pre;
  const Eigen::VectorXd b = donors_pre.transpose() * treated_pre;
  const double yy = treated_pre.squaredNorm();
  auto sse = [&](const Eigen::VectorXd& w) { return (treated_pre - donors_pre * w).squaredNorm(); };

  ScWeights out;
  Eigen::VectorXd w = Eigen::VectorXd::Constant(J, 1.0 / static_cast<double>(J));
  Eigen::VectorXd grad = 2.0 * (G * w - b);
  double f = sse(w);
  const double scale = std::max(1.0, yy);

  int it = 0;
  for (; it < opts.max_iter; ++it) {
    Eigen::Index s = 0;
    grad.minCoeff(&s);
    const double gap = grad.dot(w) - grad[s];
    if (gap <= opts.tol * (1.0 + f)) {
      out.converged = true;
      break;
    }
    Eigen::Index v = -1;
    for (Eigen::Index j = 0; j < J; ++j) {
      if (w[j] > 0.0 && (v < 0 || grad[j] > grad[v])) v = j;
    }
    const double slope = grad[s] - grad[v];
    if (v == s || slope >= 0.0) {
      // Gap is positive but no descent pair exists: numerical floor reached.
      out.converged = gap <= 1e3 * opts.tol * (1.0 + f) + 1e-14 * scale;
      break;
    }
    const double curv = 2.0 * (G(s, s) + G(v, v) - 2.0 * G(s, v));
    double step = w[v];
    if (curv > 0.0) step = std::min(step, -slope / curv);
    if (step <= 0.0) break;

    w[s] += step;
    if (step == w[v]) {
      w[v] = 0.0;
    } else {
      w[v] -= step;
    }
    grad += 2.0 * step * (G.col(s) - G.col(v));
    const double f_next = f + step * slope + 0.5 * step * step * curv;
    f = (it % 64 == 63) ? sse(w) : std::max(0.0, f_next);
    if (opts.record_trace) out.trace.push_back(f);
  }

  // Renormalise against accumulated rounding before reporting.
  w = w.cwiseMax(0.0);
  w /= w.sum();
  out.w = w;
  out.objective = sse(w);
  grad = 2.0 * (G * w - b);
  out.gap = grad.dot(w) - grad.minCoeff();
  out.iterations = it;
  if (!out.converged) out.converged = out.gap <= opts.tol * (1.0 + out.objective);
  return out;
}

Eigen::VectorXd impute_counterfactual(const ScWeights& weights, const Eigen::MatrixXd& donors_post) {
  if (donors_post.cols() != weights.w.size()) {
    throw Error(ErrorCode::DimensionMismatch, "donor count does not match weights");
  }
  return donors_post * weights.w;
}

double relative_risk(const Eigen::VectorXd& observed_post, const Eigen::VectorXd& counterfactual_post, Scale scale) {
  if (observed_post.size() != counterfactual_post.size() || observed_post.size() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "observed vs counterfactual post series");
  }
  double num = 0.0, den = 0.0;
  if (scale == Scale::raw_rate) {
    if ((counterfactual_post.array() <= 0.0).any()) {
      throw Error(ErrorCode::NonPositiveDenominator, "counterfactual rate must be positive");
    }
    num = observed_post.sum();
    den = counterfactual_post.sum();
  } else {
    num = observed_post.array().exp().sum();
    den = counterfactual_post.array().exp().sum();
  }
  if (!(den > 0.0) || !std::isfinite(den)) throw Error(ErrorCode::NonPositiveDenominator, "counterfactual sum");
  return num / den;
}

ScFit fit_sc(const WindowSlice& slice, const SolverOptions& opts) {
  ScFit fit;
  fit.weights = fit_sc_weights(slice.treated_pre, slice.donors_pre, opts);
  fit.counterfactual_pre = slice.donors_pre * fit.weights.w;
  fit.counterfactual_post = impute_counterfactual(fit.weights, slice.donors_post);
  fit.rmse_pre = std::sqrt((slice.treated_pre - fit.counterfactual_pre).squaredNorm() /
                           static_cast<double>(slice.treated_pre.size()));
  return fit;
}

}  // namespace hwsc::sc
