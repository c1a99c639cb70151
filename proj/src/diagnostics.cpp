#include "hwsc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "hwsc/error.hpp"

namespace hwsc::diagnostics {

namespace {

Eigen::MatrixXd split(const Eigen::MatrixXd& chains) {
  const auto n = chains.rows() / 2;
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "need at least 4 draws per chain");
  Eigen::MatrixXd out(n, 2 * chains.cols());
  for (Eigen::Index c = 0; c < chains.cols(); ++c) {
    out.col(2 * c) = chains.col(c).head(n);
    out.col(2 * c + 1) = chains.col(c).tail(n);
  }
  return out;
}

Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& x) {
  const auto size = x.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(size));
  std::iota(idx.begin(), idx.end(), 0);
  const double* data = x.data();
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return data[a] < data[b]; });
  Eigen::MatrixXd z(x.rows(), x.cols());
  const boost::math::normal_distribution<double> nd;
  double* out = z.data();
  std::size_t k = 0;
  while (k < idx.size()) {
    std::size_t e = k;
    while (e + 1 < idx.size() && data[idx[e + 1]] == data[idx[k]]) ++e;
    const double rank = 0.5 * static_cast<double>(k + e) + 1.0;  // average rank, 1-based
    const double u = (rank - 0.375) / (static_cast<double>(size) + 0.25);
    const double q = boost::math::quantile(nd, u);
    for (std::size_t m = k; m <= e; ++m) out[idx[m]] = q;
    k = e + 1;
  }
  return z;
}

double rhat_plain(const Eigen::MatrixXd& x) {
  const double n = static_cast<double>(x.rows());
  const Eigen::RowVectorXd means = x.colwise().mean();
  const double grand = means.mean();
  const double B = n * (means.array() - grand).square().sum() / static_cast<double>(x.cols() - 1);
  double W = 0.0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) W += (x.col(c).array() - means[c]).square().sum() / (n - 1.0);
  W /= static_cast<double>(x.cols());
  if (!(W > 0.0)) return B > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

// Stan's multi-chain ESS with Geyer's initial monotone sequence.
double ess_plain(const Eigen::MatrixXd& x) {
  const auto n = x.rows();
  const auto m = x.cols();
  const double dn = static_cast<double>(n);
  const Eigen::RowVectorXd means = x.colwise().mean();
  Eigen::VectorXd chain_var(m);
  for (Eigen::Index c = 0; c < m; ++c) chain_var[c] = (x.col(c).array() - means[c]).square().sum() / (dn - 1.0);
  const double W = chain_var.mean();
  const double B_over_n = m > 1 ? (means.array() - means.mean()).square().sum() / static_cast<double>(m - 1) : 0.0;
  const double var_plus = (dn - 1.0) / dn * W + B_over_n;
  if (!(var_plus > 0.0)) return static_cast<double>(n * m);

  auto autocov = [&](Eigen::Index c, Eigen::Index lag) {
    const auto col = x.col(c).array() - means[c];
    return (col.head(n - lag) * col.tail(n - lag)).sum() / dn;
  };
  auto rho = [&](Eigen::Index lag) {
    double mean_acov = 0.0;
    for (Eigen::Index c = 0; c < m; ++c) mean_acov += autocov(c, lag);
    mean_acov /= static_cast<double>(m);
    return 1.0 - (W - mean_acov) / var_plus;
  };

  // Sums of consecutive autocorrelation pairs, truncated at the first
  // non-positive pair.
  Eigen::Index t = 1;
  std::vector<double> pairs;
  pairs.push_back(1.0 + rho(1));
  while (t + 2 < n) {
    const double r1 = rho(t + 1);
    const double r2 = rho(t + 2);
    const double p = r1 + r2;
    if (!(p > 0.0)) break;
    pairs.push_back(p);
    t += 2;
  }
  for (std::size_t k = 1; k < pairs.size(); ++k) pairs[k] = std::min(pairs[k], pairs[k - 1]);
  double tau = -1.0;
  for (double p : pairs) tau += 2.0 * p;
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(n * m)));
  return static_cast<double>(n * m) / tau;
}

}  // namespace

double split_rhat(const Eigen::MatrixXd& chains) { return rhat_plain(rank_normalize(split(chains))); }

double bulk_ess(const Eigen::MatrixXd& chains) { return ess_plain(rank_normalize(split(chains))); }

double ess(const Eigen::MatrixXd& chains) { return ess_plain(split(chains)); }

double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw Error(ErrorCode::EmptySeries, "quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace hwsc::diagnostics
