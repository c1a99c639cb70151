#include <cmath>
#include <numbers>

#include <doctest.h>

#include "hwsc/error.hpp"
#include "hwsc/geo.hpp"
#include "hwsc/rng.hpp"

using namespace hwsc;
using namespace hwsc::geo;

TEST_CASE("haversine") {
  const Centroid boston{42.36, -71.06}, nyc{40.71, -74.01};
  CHECK(haversine_km(boston, boston) == 0.0);
  CHECK(haversine_km({0, 0}, {0, 180}) == doctest::Approx(std::numbers::pi * kEarthRadiusKm).epsilon(1e-12));
  // spherical law of cosines, computed independently
  CHECK(std::abs(haversine_km(boston, nyc) - 306.48626221388866) < 0.1);
}

TEST_CASE("row standardisation") {
  Eigen::MatrixXd W(3, 3);
  W << 0, 2, 2, 0, 0, 0, 1, 3, 0;
  const auto g = row_standardize(W);
  const Eigen::MatrixXd d(g.W);
  CHECK(d(0, 1) == 0.5);
  CHECK(d(0, 2) == 0.5);
  CHECK(d(1, 1) == 1.0);
  CHECK(g.islands == std::vector<std::size_t>{1});
  CHECK(d(2, 0) == 0.25);
  const Eigen::MatrixXd again(row_standardize(d).W);
  CHECK((again - d).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("k-NN kernel weights on three equidistant units") {
  // equilateral-ish triangle on the equator is not exact; use points on a small circle
  SpatialIndex idx({"a", "b", "c"}, {{0.0, 0.0}, {0.0, 1.0}, {0.8660254037844386, 0.5}});
  const Eigen::MatrixXd W(knn_kernel_weights(idx, 2, 0.5).W);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) CHECK(W(i, j) == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("k-NN kernel weights match a brute-force build on a line") {
  std::vector<std::string> ids;
  std::vector<Centroid> cs;
  for (int i = 0; i < 5; ++i) {
    ids.push_back("u" + std::to_string(i));
    cs.push_back({0.0, double(i)});
  }
  const SpatialIndex idx(ids, cs);
  const int k = 2;
  const double factor = 0.5;
  const auto g = knn_kernel_weights(idx, k, factor);

  // brute force: each unit's k nearest by distance (ties by index), median k-NN distance,
  // c = factor * median over units, exp(-d/c), max-symmetrise, row-normalise
  const auto& D = idx.distances();
  std::vector<double> meds;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(5, 5);
  std::vector<std::vector<int>> nn(5);
  for (int i = 0; i < 5; ++i) {
    std::vector<int> o;
    for (int j = 0; j < 5; ++j)
      if (j != i) o.push_back(j);
    std::stable_sort(o.begin(), o.end(), [&](int a, int b) { return D(i, a) < D(i, b); });
    o.resize(k);
    nn[i] = o;
    std::vector<double> ds{D(i, o[0]), D(i, o[1])};
    meds.push_back(0.5 * (ds[0] + ds[1]));
  }
  std::sort(meds.begin(), meds.end());
  const double c = factor * meds[2];
  CHECK(g.bandwidth_km == doctest::Approx(c).epsilon(1e-12));
  for (int i = 0; i < 5; ++i)
    for (int j : nn[i]) {
      const double v = std::exp(-D(i, j) / c);
      K(i, j) = std::max(K(i, j), v);
      K(j, i) = std::max(K(j, i), v);
    }
  for (int i = 0; i < 5; ++i) K.row(i) /= K.row(i).sum();
  const Eigen::MatrixXd W(g.W);
  CHECK((W - K).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("degrees of separation") {
  AdjacencyGraph g(4);
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  const auto s = degrees_of_separation(g);
  CHECK(s(0, 1) == 1);
  CHECK(s(0, 2) == 2);
  CHECK(s(0, 0) == 0);
  CHECK_FALSE(s.reachable(0, 3));
}

TEST_CASE("sar_smooth") {
  Eigen::MatrixXd A(3, 3);
  A << 0, 1, 1, 1, 0, 0, 1, 1, 0;
  const auto W = row_standardize(A);
  Eigen::VectorXd nu(3);
  nu << 1, -2, 0.5;
  CHECK((sar_smooth(W, 0.0, nu) - nu).norm() == 0.0);
  const Eigen::MatrixXd Wd(W.W);
  const Eigen::VectorXd direct = (Eigen::MatrixXd::Identity(3, 3) - 0.5 * Wd).partialPivLu().solve(nu);
  CHECK((sar_smooth(W, 0.5, nu) - direct).cwiseAbs().maxCoeff() < 1e-12);
}
