#include "hwsc/donor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hwsc/error.hpp"

namespace hwsc::donor {

namespace {

void check_window(const exposure::TreatmentMask& mask, const EpisodeWindow& window) {
  window.validate(static_cast<std::size_t>(mask.cols()));
  if (window.treated_unit >= static_cast<std::size_t>(mask.rows())) {
    throw Error(ErrorCode::InvalidArgument, "treated unit outside mask");
  }
}

void order_by_proximity(DonorPool& pool) {
  std::vector<std::size_t> idx(pool.donors.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (pool.proximity[a] != pool.proximity[b]) return pool.proximity[a] < pool.proximity[b];
    return pool.donors[a] < pool.donors[b];
  });
  std::vector<std::size_t> donors;
  std::vector<double> prox;
  for (auto k : idx) {
    donors.push_back(pool.donors[k]);
    prox.push_back(pool.proximity[k]);
  }
  pool.donors = std::move(donors);
  pool.proximity = std::move(prox);
}

}  // namespace

std::vector<std::size_t> treated_in_window(const exposure::TreatmentMask& mask, const EpisodeWindow& window) {
  check_window(mask, window);
  const auto b = static_cast<Eigen::Index>(window.begin());
  const auto len = static_cast<Eigen::Index>(window.pre_len + window.post_len);
  std::vector<std::size_t> out;
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    if (static_cast<std::size_t>(i) == window.treated_unit || (mask.row(i).segment(b, len) != 0).any()) {
      out.push_back(static_cast<std::size_t>(i));
    }
  }
  return out;
}

DonorPool standard_pool(const exposure::TreatmentMask& mask, const EpisodeWindow& window) {
  DonorPool pool;
  pool.treated_unit = window.treated_unit;
  pool.window = window;
  pool.kind = PoolKind::standard;
  pool.treated_in_window = treated_in_window(mask, window);
  std::vector<char> treated(static_cast<std::size_t>(mask.rows()), 0);
  for (auto i : pool.treated_in_window) treated[i] = 1;
  for (std::size_t i = 0; i < treated.size(); ++i) {
    if (!treated[i]) pool.donors.push_back(i);
  }
  return pool;
}

DonorPool spatial_pool(const exposure::TreatmentMask& mask, const EpisodeWindow& window,
                       const geo::SeparationMatrix& sep, int s0) {
  if (s0 < 0) throw Error(ErrorCode::InvalidArgument, "s0 must be >= 0");
  if (sep.size() != static_cast<std::size_t>(mask.rows())) throw Error(ErrorCode::DimensionMismatch, "separation matrix");
  const auto base = standard_pool(mask, window);
  DonorPool pool = base;
  pool.kind = PoolKind::spatial_buffered;
  pool.buffer = SeparationBuffer{s0};
  pool.donors.clear();
  for (auto j : base.donors) {
    int nearest = geo::SeparationMatrix::kUnreachable;
    for (auto i : base.treated_in_window) nearest = std::min(nearest, sep(i, j));
    if (nearest > s0) {
      pool.donors.push_back(j);
      pool.proximity.push_back(nearest == geo::SeparationMatrix::kUnreachable
                                   ? std::numeric_limits<double>::infinity()
                                   : static_cast<double>(nearest));
    }
  }
  order_by_proximity(pool);
  return pool;
}

DonorPool spatial_pool(const exposure::TreatmentMask& mask, const EpisodeWindow& window,
                       const Eigen::MatrixXd& distance_km, double km) {
  if (!(km >= 0.0)) throw Error(ErrorCode::InvalidArgument, "buffer_km must be >= 0");
  if (distance_km.rows() != mask.rows() || distance_km.cols() != mask.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "distance matrix");
  }
  const auto base = standard_pool(mask, window);
  DonorPool pool = base;
  pool.kind = PoolKind::spatial_buffered;
  pool.buffer = DistanceBuffer{km};
  pool.donors.clear();
  for (auto j : base.donors) {
    double nearest = std::numeric_limits<double>::infinity();
    for (auto i : base.treated_in_window) {
      nearest = std::min(nearest, distance_km(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    if (nearest > km) {
      pool.donors.push_back(j);
      pool.proximity.push_back(nearest);
    }
  }
  order_by_proximity(pool);
  return pool;
}

DonorPool eligible_donors(const exposure::TreatmentMask& mask, const EpisodeWindow& window, const Buffer& buffer,
                          const geo::SeparationMatrix* sep, const Eigen::MatrixXd* distance_km) {
  DonorPool pool;
  if (std::holds_alternative<SeparationBuffer>(buffer)) {
    if (!sep) throw Error(ErrorCode::InvalidArgument, "separation buffer needs a contiguity graph");
    pool = spatial_pool(mask, window, *sep, std::get<SeparationBuffer>(buffer).s0);
  } else if (std::holds_alternative<DistanceBuffer>(buffer)) {
    if (!distance_km) throw Error(ErrorCode::InvalidArgument, "distance buffer needs centroids");
    pool = spatial_pool(mask, window, *distance_km, std::get<DistanceBuffer>(buffer).km);
  } else {
    pool = standard_pool(mask, window);
  }
  if (pool.donors.empty()) throw Error(ErrorCode::EmptyPool, "no eligible donor for the episode");
  return pool;
}

Eigen::VectorXd mahalanobis_distances(const DonorPool& pool, const Eigen::MatrixXd& covariates) {
  const auto J = static_cast<Eigen::Index>(pool.donors.size());
  const auto p = covariates.cols();
  if (J == 0) throw Error(ErrorCode::EmptyPool, "mahalanobis screen on an empty pool");
  if (p < 1 || pool.treated_unit >= static_cast<std::size_t>(covariates.rows())) {
    throw Error(ErrorCode::DimensionMismatch, "covariate table does not cover the panel");
  }
  Eigen::MatrixXd X(J, p);
  for (Eigen::Index j = 0; j < J; ++j) X.row(j) = covariates.row(static_cast<Eigen::Index>(pool.donors[static_cast<std::size_t>(j)]));
  const Eigen::RowVectorXd mu = X.colwise().mean();
  const Eigen::MatrixXd centered = X.rowwise() - mu;
  Eigen::MatrixXd S = J > 1 ? Eigen::MatrixXd(centered.transpose() * centered / static_cast<double>(J - 1))
                            : Eigen::MatrixXd(Eigen::MatrixXd::Zero(p, p));

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  const double max_ev = eig.eigenvalues().maxCoeff();
  const double min_ev = eig.eigenvalues().minCoeff();
  if (!(max_ev > 0.0) || min_ev <= 1e-12 * max_ev) {
    double lambda = 1e-6 * S.diagonal().mean();
    if (!(lambda > 0.0)) lambda = 1e-6;
    S.diagonal().array() += lambda;
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
  const Eigen::RowVectorXd x0 = covariates.row(static_cast<Eigen::Index>(pool.treated_unit));
  Eigen::VectorXd d(J);
  for (Eigen::Index j = 0; j < J; ++j) {
    const Eigen::VectorXd diff = (X.row(j) - x0).transpose();
    d[j] = diff.dot(ldlt.solve(diff));
  }
  return d;
}

DonorPool mahalanobis_screen(const DonorPool& pool, const Eigen::MatrixXd& covariates,
                             const std::vector<std::string>& unit_ids, int K) {
  if (K < 1) throw Error(ErrorCode::InvalidArgument, "screen K must be >= 1");
  DonorPool out = pool;
  if (pool.donors.size() <= static_cast<std::size_t>(K)) {
    out.screen_truncated = pool.donors.size() < static_cast<std::size_t>(K);
    return out;
  }
  const auto d = mahalanobis_distances(pool, covariates);
  std::vector<std::size_t> idx(pool.donors.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto da = d[static_cast<Eigen::Index>(a)];
    const auto db = d[static_cast<Eigen::Index>(b)];
    if (da != db) return da < db;
    return unit_ids[pool.donors[a]] < unit_ids[pool.donors[b]];
  });
  std::vector<char> keep(pool.donors.size(), 0);
  for (int k = 0; k < K; ++k) keep[idx[static_cast<std::size_t>(k)]] = 1;
  out.donors.clear();
  out.proximity.clear();
  for (std::size_t k = 0; k < pool.donors.size(); ++k) {
    if (!keep[k]) continue;
    out.donors.push_back(pool.donors[k]);
    if (!pool.proximity.empty()) out.proximity.push_back(pool.proximity[k]);
  }
  return out;
}

Eigen::MatrixXd pre_window_means(const std::vector<Eigen::MatrixXd>& series, const EpisodeWindow& window) {
  if (series.empty()) throw Error(ErrorCode::InvalidArgument, "no covariate series");
  const auto n = series.front().rows();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(series.size()));
  for (std::size_t k = 0; k < series.size(); ++k) {
    window.validate(static_cast<std::size_t>(series[k].cols()));
    out.col(static_cast<Eigen::Index>(k)) = series[k]
                                                .middleCols(static_cast<Eigen::Index>(window.begin()),
                                                            static_cast<Eigen::Index>(window.pre_len))
                                                .rowwise()
                                                .mean();
  }
  return out;
}

}  // namespace hwsc::donor
