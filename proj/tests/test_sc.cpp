#include <cmath>

#include <doctest.h>

#include "hwsc/error.hpp"
#include "hwsc/rng.hpp"
#include "hwsc/sc.hpp"

using namespace hwsc;
using namespace hwsc::sc;

namespace {

Eigen::MatrixXd randn(Rng& rng, int r, int c) {
  Eigen::MatrixXd m(r, c);
  for (auto& x : m.reshaped()) x = rng.normal();
  return m;
}

double grid_min(const Eigen::VectorXd& y, const Eigen::MatrixXd& X) {
  double best = 1e300;
  for (int a = 0; a <= 100; ++a)
    for (int b = 0; a + b <= 100; ++b) {
      Eigen::Vector3d w(a / 100.0, b / 100.0, (100 - a - b) / 100.0);
      best = std::min(best, (y - X * w).squaredNorm());
    }
  return best;
}

}  // namespace

TEST_CASE("vertex solution") {
  Rng rng(1);
  const Eigen::MatrixXd X = randn(rng, 20, 4);
  const Eigen::VectorXd y = X.col(2);
  const auto w = fit_sc_weights(y, X);
  CHECK(w.w[2] >= 0.999);
  CHECK(w.converged);
}

TEST_CASE("interior solution") {
  Rng rng(2);
  const Eigen::MatrixXd X = randn(rng, 20, 2);
  const Eigen::VectorXd y = 0.5 * X.col(0) + 0.5 * X.col(1);
  const auto w = fit_sc_weights(y, X);
  CHECK(std::abs(w.w[0] - 0.5) < 1e-6);
  CHECK(std::abs(w.w[1] - 0.5) < 1e-6);
}

TEST_CASE("weights stay on the simplex and beat the 0.01 grid") {
  Rng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::MatrixXd X = randn(rng, 20, 3);
    const Eigen::VectorXd y = randn(rng, 20, 1);
    const auto w = fit_sc_weights(y, X);
    CHECK(std::abs(w.w.sum() - 1.0) < 1e-12);
    CHECK(w.w.minCoeff() >= 0.0);
    CHECK(w.objective <= grid_min(y, X) + 1e-3);
  }
}

TEST_CASE("objective trace is non-increasing") {
  Rng rng(8);
  const Eigen::MatrixXd X = randn(rng, 30, 10);
  const Eigen::VectorXd y = randn(rng, 30, 1);
  SolverOptions o;
  o.record_trace = true;
  const auto w = fit_sc_weights(y, X, o);
  for (std::size_t k = 1; k < w.trace.size(); ++k) CHECK(w.trace[k] <= w.trace[k - 1] + 1e-12);
}

TEST_CASE("counterfactual imputation") {
  Rng rng(9);
  ScWeights w;
  const Eigen::MatrixXd post = randn(rng, 10, 4);
  w.w = Eigen::VectorXd::Constant(4, 0.25);
  Eigen::MatrixXd same(10, 4);
  for (int j = 0; j < 4; ++j) same.col(j) = post.col(0);
  CHECK((impute_counterfactual(w, same) - post.col(0)).norm() < 1e-14);
  w.w = Eigen::VectorXd::Unit(4, 3);
  CHECK(impute_counterfactual(w, post) == post.col(3));
  w.w << 0.1, 0.2, 0.3, 0.4;
  const auto cf = impute_counterfactual(w, post);
  for (int t = 0; t < 10; ++t) {
    double acc = 0;
    for (int j = 0; j < 4; ++j) acc += post(t, j) * w.w[j];
    CHECK(cf[t] == doctest::Approx(acc).epsilon(1e-14));
  }
}

TEST_CASE("relative risk") {
  Eigen::VectorXd cf(5);
  cf << 2, 3, 1.5, 4, 2.5;
  CHECK(relative_risk(cf, cf, Scale::raw_rate) == 1.0);
  CHECK(relative_risk(1.10 * cf, cf, Scale::raw_rate) == doctest::Approx(1.10).epsilon(1e-14));
  const Eigen::VectorXd lcf = cf.array().log();
  const Eigen::VectorXd lobs = (1.10 * cf).array().log();
  CHECK(relative_risk(lobs, lcf, Scale::log_rate) == doctest::Approx(1.10).epsilon(1e-12));
  CHECK_THROWS_AS(relative_risk(cf, Eigen::VectorXd::Zero(5), Scale::raw_rate), Error);
}
