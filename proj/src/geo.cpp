#include "hwsc/geo.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>
#include <unordered_map>

#include <Eigen/SparseLU>

#include "hwsc/csv.hpp"
#include "hwsc/error.hpp"

namespace hwsc::geo {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Indices of the k nearest other units, ties broken by index.
std::vector<std::size_t> nearest(const Eigen::MatrixXd& D, std::size_t i, int k) {
  std::vector<std::size_t> order;
  order.reserve(static_cast<std::size_t>(D.rows()) - 1);
  for (std::size_t j = 0; j < static_cast<std::size_t>(D.rows()); ++j) {
    if (j != i) order.push_back(j);
  }
  const auto row = static_cast<Eigen::Index>(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return D(row, static_cast<Eigen::Index>(a)) < D(row, static_cast<Eigen::Index>(b));
  });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

}  // namespace

double haversine_km(const Centroid& a, const Centroid& b) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * rad;
  const double dlon = (b.lon - a.lon) * rad;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  const double h = s1 * s1 + std::cos(a.lat * rad) * std::cos(b.lat * rad) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(std::min(1.0, h)));
}

SpatialIndex::SpatialIndex(std::vector<std::string> units, std::vector<Centroid> centroids)
    : units_(std::move(units)), centroids_(std::move(centroids)) {
  if (units_.size() != centroids_.size()) throw Error(ErrorCode::DimensionMismatch, "units vs centroids");
  for (const auto& c : centroids_) {
    if (!(c.lat >= -90.0 && c.lat <= 90.0 && c.lon >= -180.0 && c.lon <= 180.0)) {
      throw Error(ErrorCode::InvalidArgument, "centroid out of range");
    }
  }
  const auto n = static_cast<Eigen::Index>(units_.size());
  dist_ = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = haversine_km(centroids_[static_cast<std::size_t>(i)], centroids_[static_cast<std::size_t>(j)]);
      dist_(i, j) = d;
      dist_(j, i) = d;
    }
  }
}

SpatialIndex SpatialIndex::aligned_to(const std::vector<std::string>& order) const {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < units_.size(); ++i) pos.emplace(units_[i], i);
  std::vector<Centroid> c;
  c.reserve(order.size());
  for (const auto& id : order) {
    const auto it = pos.find(id);
    if (it == pos.end()) throw Error(ErrorCode::MissingCell, "no centroid for unit '" + id + "'");
    c.push_back(centroids_[it->second]);
  }
  return SpatialIndex(order, std::move(c));
}

SpatialIndex read_centroids_csv(const std::filesystem::path& path) {
  const auto table = csv::read_file(path);
  const auto cu = table.require_column("unit_id");
  const auto clat = table.require_column("lat");
  const auto clon = table.require_column("lon");
  std::vector<std::string> units;
  std::vector<Centroid> cs;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    units.push_back(table.rows[r][cu]);
    cs.push_back({csv::parse_double(table.rows[r][clat], table.line_numbers[r]),
                  csv::parse_double(table.rows[r][clon], table.line_numbers[r])});
  }
  return SpatialIndex(std::move(units), std::move(cs));
}

GeoWeightMatrix row_standardize(const Eigen::MatrixXd& W) {
  if ((W.array() < 0.0).any()) throw Error(ErrorCode::InvalidArgument, "weights must be nonnegative");
  const auto n = W.rows();
  GeoWeightMatrix out;
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = W.row(i).sum();
    if (s <= 0.0) {
      trip.emplace_back(i, i, 1.0);
      out.islands.push_back(static_cast<std::size_t>(i));
      continue;
    }
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      if (W(i, j) != 0.0) trip.emplace_back(i, j, W(i, j) / s);
    }
  }
  out.W.resize(n, W.cols());
  out.W.setFromTriplets(trip.begin(), trip.end());
  out.W.makeCompressed();
  return out;
}

double knn_median_distance(const SpatialIndex& index, int k) {
  const auto n = index.size();
  if (k < 1 || static_cast<std::size_t>(k) >= n) throw Error(ErrorCode::InvalidArgument, "k must satisfy 1 <= k < N");
  std::vector<double> per_unit(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> d;
    for (auto j : nearest(index.distances(), i, k)) d.push_back(index.distance(i, j));
    per_unit[i] = median(std::move(d));
  }
  return median(std::move(per_unit));
}

GeoWeightMatrix knn_kernel_weights(const SpatialIndex& index, int k, double bandwidth_factor) {
  if (!(bandwidth_factor > 0.0)) throw Error(ErrorCode::InvalidArgument, "bandwidth factor must be positive");
  const double c = bandwidth_factor * knn_median_distance(index, k);
  if (!(c > 0.0)) throw Error(ErrorCode::DegenerateGeometry, "zero k-NN bandwidth (coincident centroids)");
  const auto n = static_cast<Eigen::Index>(index.size());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < index.size(); ++i) {
    for (auto j : nearest(index.distances(), i, k)) {
      K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::exp(-index.distance(i, j) / c);
    }
  }
  const Eigen::MatrixXd sym = K.cwiseMax(K.transpose());
  auto out = row_standardize(sym);
  out.k = k;
  out.bandwidth_km = c;
  return out;
}

void AdjacencyGraph::add_edge(std::size_t a, std::size_t b) {
  if (a >= size() || b >= size()) throw Error(ErrorCode::InvalidArgument, "edge endpoint out of range");
  if (a == b) throw Error(ErrorCode::InvalidArgument, "self-loop in adjacency");
  if (adjacent(a, b)) return;
  nbrs_[a].push_back(b);
  nbrs_[b].push_back(a);
  std::sort(nbrs_[a].begin(), nbrs_[a].end());
  std::sort(nbrs_[b].begin(), nbrs_[b].end());
}

bool AdjacencyGraph::adjacent(std::size_t a, std::size_t b) const {
  return std::binary_search(nbrs_[a].begin(), nbrs_[a].end(), b);
}

Eigen::MatrixXd AdjacencyGraph::dense() const {
  const auto n = static_cast<Eigen::Index>(size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < size(); ++i) {
    for (auto j : nbrs_[i]) A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
  }
  return A;
}

AdjacencyGraph read_adjacency_csv(const std::filesystem::path& path, const std::vector<std::string>& units) {
  const auto table = csv::read_file(path);
  const auto ca = table.require_column("unit_a");
  const auto cb = table.require_column("unit_b");
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < units.size(); ++i) pos.emplace(units[i], i);
  AdjacencyGraph g(units.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto line = std::to_string(table.line_numbers[r]);
    const auto ia = pos.find(table.rows[r][ca]);
    const auto ib = pos.find(table.rows[r][cb]);
    if (ia == pos.end() || ib == pos.end()) throw Error(ErrorCode::ParseError, "line " + line + ": unknown unit");
    if (ia->second == ib->second) throw Error(ErrorCode::ParseError, "line " + line + ": self-loop");
    g.add_edge(ia->second, ib->second);
  }
  return g;
}

SeparationMatrix degrees_of_separation(const AdjacencyGraph& adj) {
  const auto n = adj.size();
  SeparationMatrix s(n);
  std::deque<std::size_t> queue;
  for (std::size_t src = 0; src < n; ++src) {
    s(src, src) = 0;
    queue.assign(1, src);
    while (!queue.empty()) {
      const auto u = queue.front();
      queue.pop_front();
      for (auto v : adj.neighbors(u)) {
        if (s(src, v) == SeparationMatrix::kUnreachable) {
          s(src, v) = s(src, u) + 1;
          queue.push_back(v);
        }
      }
    }
  }
  return s;
}

Eigen::VectorXd sar_smooth(const GeoWeightMatrix& W, double varpi, const Eigen::VectorXd& nu) {
  if (!(std::abs(varpi) < 1.0)) throw Error(ErrorCode::InvalidArgument, "|varpi| must be < 1");
  const auto n = W.W.rows();
  if (W.W.cols() != n || nu.size() != n) throw Error(ErrorCode::DimensionMismatch, "sar_smooth shapes");
  if (varpi == 0.0) return nu;
  SparseRowMatrix I(n, n);
  I.setIdentity();
  const Eigen::SparseMatrix<double> A = I - varpi * W.W;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "I - varpi W factorisation failed");
  Eigen::VectorXd x = lu.solve(nu);
  if (lu.info() != Eigen::Success || !x.allFinite()) throw Error(ErrorCode::SingularSystem, "I - varpi W solve failed");
  return x;
}

}  // namespace hwsc::geo
