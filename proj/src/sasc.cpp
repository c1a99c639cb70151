#include "hwsc/sasc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hwsc/diagnostics.hpp"
#include "hwsc/error.hpp"
#include "hwsc/rng.hpp"

namespace hwsc::sasc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMaxLog = 700.0;
constexpr std::uint64_t kPredictiveStream = 0x5eedULL << 20;

}  // namespace

DistanceScale parse_distance_scale(const std::string& s) {
  if (s == "unit") return DistanceScale::unit;
  if (s == "km") return DistanceScale::km;
  throw Error(ErrorCode::InvalidArgument, "distance scale must be km or unit");
}

std::string to_string(Prior p) { return p == Prior::spatial ? "spatial" : "non_spatial"; }

void SascData::validate() const {
  const auto J = Y_pre.cols();
  if (J < 1) throw Error(ErrorCode::EmptyPool, "model needs at least one donor");
  if (y_pre.size() < 1 || Y_pre.rows() != y_pre.size()) throw Error(ErrorCode::DimensionMismatch, "pre-period shapes");
  if (Y_post.cols() != J || d.size() != J) throw Error(ErrorCode::DimensionMismatch, "donor count mismatch");
  if (!y_pre.allFinite() || !Y_pre.allFinite() || !Y_post.allFinite() || !d.allFinite()) {
    throw Error(ErrorCode::NonFiniteValue, "model data");
  }
  if ((d.array() < 0.0).any()) throw Error(ErrorCode::InvalidArgument, "distances must be nonnegative");
}

SascData make_data(const WindowSlice& slice, const Eigen::VectorXd& distance_km, DistanceScale scale) {
  SascData data{slice.treated_pre, slice.donors_pre, slice.donors_post, distance_km};
  if (scale == DistanceScale::unit && distance_km.size() > 0) {
    const double m = distance_km.maxCoeff();
    if (m > 0.0) data.d = distance_km / m;
  }
  data.validate();
  return data;
}

Eigen::VectorXd softmax_centered(const Eigen::VectorXd& eta) {
  if (eta.size() == 0) return eta;
  const Eigen::ArrayXd centered = eta.array() - eta.mean();
  const Eigen::ArrayXd e = (centered - centered.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

Model::Model(SascData data, Prior prior) : data_(std::move(data)), prior_(prior) { data_.validate(); }

Model disable_spatial_prior(const SascData& data) { return Model(data, Prior::non_spatial); }

int Model::dim() const { return static_cast<int>(data_.donors()) + (prior_ == Prior::spatial ? 3 : 2); }

SascParams Model::unpack(const Eigen::VectorXd& theta) const {
  const auto J = static_cast<Eigen::Index>(data_.donors());
  SascParams p;
  p.sigma = std::exp(theta[J]);
  p.tau_eta = std::exp(theta[J + 1]);
  p.varsigma = prior_ == Prior::spatial ? std::exp(theta[J + 2]) : 0.0;
  p.eta = p.tau_eta * theta.head(J) - p.varsigma * data_.d;
  return p;
}

Eigen::VectorXd Model::weights(const Eigen::VectorXd& theta) const { return softmax_centered(unpack(theta).eta); }

double Model::log_posterior(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd g;
  return log_posterior(theta, g);
}

double Model::log_posterior(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
  const auto J = static_cast<Eigen::Index>(data_.donors());
  if (theta.size() != dim()) throw Error(ErrorCode::DimensionMismatch, "parameter vector length");
  grad.resize(theta.size());
  const bool spatial = prior_ == Prior::spatial;
  const double log_sigma = theta[J];
  const double log_tau = theta[J + 1];
  const double log_vs = spatial ? theta[J + 2] : 0.0;
  if (!theta.allFinite() || std::abs(log_sigma) > kMaxLog || std::abs(log_tau) > kMaxLog || std::abs(log_vs) > kMaxLog) {
    grad.setZero();
    return kNegInf;
  }
  const double sigma = std::exp(log_sigma);
  const double tau = std::exp(log_tau);
  const double vs = spatial ? std::exp(log_vs) : 0.0;
  const auto z = theta.head(J);

  const Eigen::VectorXd eta = tau * z - vs * data_.d;
  const Eigen::VectorXd omega = softmax_centered(eta);
  const Eigen::VectorXd resid = data_.y_pre - data_.Y_pre * omega;
  const double rss = resid.squaredNorm();
  const double T = static_cast<double>(data_.y_pre.size());
  const double inv_var = 1.0 / (sigma * sigma);

  double lp = -T * log_sigma - 0.5 * rss * inv_var;
  lp += -0.5 * z.squaredNorm();
  lp += -0.5 * sigma * sigma + log_sigma;
  lp += -0.5 * tau * tau + log_tau;
  if (spatial) lp += -0.5 * vs * vs + log_vs;
  if (!std::isfinite(lp)) {
    grad.setZero();
    return kNegInf;
  }

  const Eigen::VectorXd g_omega = data_.Y_pre.transpose() * resid * inv_var;
  const Eigen::VectorXd g_eta = omega.cwiseProduct(g_omega.array().matrix() - Eigen::VectorXd::Constant(J, omega.dot(g_omega)));
  grad.head(J) = tau * g_eta - z;
  grad[J] = -T + rss * inv_var - sigma * sigma + 1.0;
  grad[J + 1] = tau * g_eta.dot(z) - tau * tau + 1.0;
  if (spatial) grad[J + 2] = -vs * g_eta.dot(data_.d) - vs * vs + 1.0;
  return lp;
}

Diagnostics diagnose(const std::vector<hmc::ChainResult>& chains) {
  Diagnostics d;
  if (chains.empty()) return d;
  const auto n = chains.front().draws.rows();
  const auto dim = chains.front().draws.cols();
  const auto m = static_cast<Eigen::Index>(chains.size());
  for (const auto& c : chains) {
    d.divergences += c.divergences;
    d.draws += static_cast<int>(c.draws.rows());
  }
  d.min_ess = std::numeric_limits<double>::infinity();
  if (n >= 4) {
    Eigen::MatrixXd per_param(n, m);
    for (Eigen::Index k = 0; k < dim; ++k) {
      for (Eigen::Index c = 0; c < m; ++c) per_param.col(c) = chains[static_cast<std::size_t>(c)].draws.col(k);
      d.max_rhat = std::max(d.max_rhat, diagnostics::split_rhat(per_param));
      d.min_ess = std::min(d.min_ess, diagnostics::bulk_ess(per_param));
    }
  } else {
    d.min_ess = 0.0;
  }
  d.degraded = !(d.max_rhat <= 1.05) || d.min_ess < 100.0 ||
               static_cast<double>(d.divergences) > 0.01 * static_cast<double>(std::max(d.draws, 1));
  return d;
}

PosteriorDraws sample_posterior(const Model& model, const SamplerConfig& config) {
  if (config.chains < 2) throw Error(ErrorCode::InvalidArgument, "sample_posterior needs chains >= 2");
  const hmc::LogDensity f = [&model](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return model.log_posterior(x, g); };
  PosteriorDraws out;
  out.prior = model.prior();
  out.seed = config.seed;
  out.chains = hmc::run_chains(f, model.dim(), config.chains, config.hmc, config.seed);

  const auto per_chain = out.chains.front().draws.rows();
  const auto total = per_chain * static_cast<Eigen::Index>(out.chains.size());
  const auto J = static_cast<Eigen::Index>(model.data().donors());
  out.weights.resize(total, J);
  out.sigma.resize(total);
  out.tau_eta.resize(total);
  out.varsigma.resize(total);
  Eigen::Index row = 0;
  for (const auto& c : out.chains) {
    for (Eigen::Index k = 0; k < c.draws.rows(); ++k, ++row) {
      const Eigen::VectorXd theta = c.draws.row(k).transpose();
      const auto p = model.unpack(theta);
      out.weights.row(row) = softmax_centered(p.eta).transpose();
      out.sigma[row] = p.sigma;
      out.tau_eta[row] = p.tau_eta;
      out.varsigma[row] = p.varsigma;
    }
  }
  out.diagnostics = diagnose(out.chains);
  return out;
}

PosteriorDraws sample_posterior(const SascData& data, Prior prior, const SamplerConfig& config) {
  const Model model(data, prior);
  return sample_posterior(model, config);
}

namespace {

PathSummary summarize_path(const Eigen::MatrixXd& donors, const PosteriorDraws& draws, const Eigen::VectorXd& mean_w,
                           Rng& rng) {
  const auto n = draws.weights.rows();
  const auto days = donors.rows();
  PathSummary s;
  s.point = donors * mean_w;
  s.draws.resize(n, days);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::VectorXd mu = donors * draws.weights.row(k).transpose();
    for (Eigen::Index t = 0; t < days; ++t) s.draws(k, t) = mu[t] + draws.sigma[k] * rng.normal();
  }
  s.median.resize(days);
  s.lower.resize(days);
  s.upper.resize(days);
  for (Eigen::Index t = 0; t < days; ++t) {
    std::vector<double> col(s.draws.col(t).data(), s.draws.col(t).data() + n);
    s.median[t] = diagnostics::quantile(col, 0.5);
    s.lower[t] = diagnostics::quantile(col, 0.025);
    s.upper[t] = diagnostics::quantile(col, 0.975);
  }
  return s;
}

}  // namespace

SascFit posterior_predictive(const PosteriorDraws& draws, const SascData& data) {
  if (draws.weights.rows() == 0) throw Error(ErrorCode::InvalidArgument, "no posterior draws");
  if (draws.weights.cols() != static_cast<Eigen::Index>(data.donors())) {
    throw Error(ErrorCode::DimensionMismatch, "draws vs data donors");
  }
  SascFit fit;
  fit.prior = draws.prior;
  fit.diagnostics = draws.diagnostics;
  fit.mean_weights = draws.weights.colwise().mean().transpose();
  Rng rng(derive_seed(draws.seed, kPredictiveStream));
  fit.pre = summarize_path(data.Y_pre, draws, fit.mean_weights, rng);
  fit.post = summarize_path(data.Y_post, draws, fit.mean_weights, rng);
  return fit;
}

RrSummary summarize_rr(std::vector<double> draws) {
  if (draws.empty()) throw Error(ErrorCode::EmptySeries, "no relative-risk draws");
  RrSummary s;
  double sum = 0.0, lsum = 0.0, lsq = 0.0;
  for (double r : draws) {
    sum += r;
    const double l = std::log(r);
    lsum += l;
    lsq += l * l;
  }
  const double n = static_cast<double>(draws.size());
  s.mean = sum / n;
  s.log_mean = lsum / n;
  s.log_sd = n > 1 ? std::sqrt(std::max(0.0, (lsq - n * s.log_mean * s.log_mean) / (n - 1.0))) : 0.0;
  s.median = diagnostics::quantile(draws, 0.5);
  s.lower = diagnostics::quantile(draws, 0.025);
  s.upper = diagnostics::quantile(draws, 0.975);
  s.draws = std::move(draws);
  return s;
}

namespace {

std::vector<double> rr_draws(const SascFit& fit, const Eigen::VectorXd& observed_post, Scale scale) {
  const auto& D = fit.post.draws;
  if (observed_post.size() != D.cols()) throw Error(ErrorCode::DimensionMismatch, "observed post length");
  const bool logged = scale != Scale::raw_rate;
  const double num = logged ? observed_post.array().exp().sum() : observed_post.sum();
  std::vector<double> out(static_cast<std::size_t>(D.rows()));
  for (Eigen::Index k = 0; k < D.rows(); ++k) {
    const double den = logged ? D.row(k).array().exp().sum() : D.row(k).sum();
    if (!(den > 0.0) || !std::isfinite(den)) {
      throw Error(ErrorCode::NonPositiveDenominator, "counterfactual rate sum must be positive");
    }
    out[static_cast<std::size_t>(k)] = num / den;
  }
  return out;
}

}  // namespace

RrSummary relative_risk_posterior(const SascFit& fit, const Eigen::VectorXd& observed_post, Scale scale) {
  return summarize_rr(rr_draws(fit, observed_post, scale));
}

RrSummary aggregate_rrt(const std::vector<SascFit>& fits, const std::vector<Eigen::VectorXd>& observed_post,
                        Scale scale) {
  if (fits.empty()) throw Error(ErrorCode::InvalidArgument, "aggregate_rrt needs at least one fit");
  if (fits.size() != observed_post.size()) throw Error(ErrorCode::DimensionMismatch, "fits vs observed series");
  std::vector<double> agg;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto r = rr_draws(fits[i], observed_post[i], scale);
    if (i == 0) {
      agg.assign(r.size(), 0.0);
    } else if (r.size() != agg.size()) {
      throw Error(ErrorCode::DimensionMismatch, "fits have different draw counts");
    }
    for (std::size_t k = 0; k < r.size(); ++k) agg[k] += r[k];
  }
  for (auto& v : agg) v /= static_cast<double>(fits.size());
  return summarize_rr(std::move(agg));
}

}  // namespace hwsc::sasc
