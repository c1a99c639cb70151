#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace hwsc::geo {

inline constexpr double kEarthRadiusKm = 6371.0088;

struct Centroid {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees
};

/// Great-circle distance between two centroids (haversine).
double haversine_km(const Centroid& a, const Centroid& b);

/// Unit centroids plus the full pairwise distance matrix in km.
class SpatialIndex {
 public:
  SpatialIndex(std::vector<std::string> units, std::vector<Centroid> centroids);

  std::size_t size() const { return units_.size(); }
  const std::vector<std::string>& units() const { return units_; }
  const std::vector<Centroid>& centroids() const { return centroids_; }
  const Eigen::MatrixXd& distances() const { return dist_; }
  double distance(std::size_t i, std::size_t j) const {
    return dist_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  /// Copy restricted to and reordered by `order`.
  SpatialIndex aligned_to(const std::vector<std::string>& order) const;

 private:
  std::vector<std::string> units_;
  std::vector<Centroid> centroids_;
  Eigen::MatrixXd dist_;
};

SpatialIndex read_centroids_csv(const std::filesystem::path& path);

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Sparse row-stochastic spatial weights.
struct GeoWeightMatrix {
  SparseRowMatrix W;
  int k = 0;
  double bandwidth_km = 0.0;
  std::vector<std::size_t> islands;
};

/// Rows divided by their sums; an all-zero row becomes a unit diagonal.
GeoWeightMatrix row_standardize(const Eigen::MatrixXd& W);

/// Exponential kernel exp(-D/c) on each unit's k nearest neighbours,
/// max-symmetrised and row-standardised. The bandwidth is
/// c = bandwidth_factor * median_i(median of unit i's k-NN distances).
GeoWeightMatrix knn_kernel_weights(const SpatialIndex& index, int k, double bandwidth_factor);

/// Median over units of each unit's median k-NN distance.
double knn_median_distance(const SpatialIndex& index, int k);

/// Undirected binary contiguity graph.
class AdjacencyGraph {
 public:
  explicit AdjacencyGraph(std::size_t n) : nbrs_(n) {}

  void add_edge(std::size_t a, std::size_t b);
  std::size_t size() const { return nbrs_.size(); }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return nbrs_[i]; }
  bool adjacent(std::size_t a, std::size_t b) const;
  Eigen::MatrixXd dense() const;

 private:
  std::vector<std::vector<std::size_t>> nbrs_;
};

/// Edge list `unit_a,unit_b`; unit ids resolved against `units`.
AdjacencyGraph read_adjacency_csv(const std::filesystem::path& path, const std::vector<std::string>& units);

/// Contiguity-graph distances. Unreachable pairs hold kUnreachable.
class SeparationMatrix {
 public:
  static constexpr int kUnreachable = std::numeric_limits<int>::max();

  explicit SeparationMatrix(std::size_t n) : n_(n), s_(n * n, kUnreachable) {}

  std::size_t size() const { return n_; }
  int operator()(std::size_t i, std::size_t j) const { return s_[i * n_ + j]; }
  int& operator()(std::size_t i, std::size_t j) { return s_[i * n_ + j]; }
  bool reachable(std::size_t i, std::size_t j) const { return (*this)(i, j) != kUnreachable; }

  bool operator==(const SeparationMatrix&) const = default;

 private:
  std::size_t n_;
  std::vector<int> s_;
};

/// Breadth-first search from every unit.
SeparationMatrix degrees_of_separation(const AdjacencyGraph& adj);

/// Solves (I - varpi W) x = nu.
Eigen::VectorXd sar_smooth(const GeoWeightMatrix& W, double varpi, const Eigen::VectorXd& nu);

}  // namespace hwsc::geo
