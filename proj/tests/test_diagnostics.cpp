#include <doctest.h>

#include "hwsc/diagnostics.hpp"
#include "hwsc/rng.hpp"

using namespace hwsc;

TEST_CASE("type-7 quantile") {
  std::vector<double> v{4, 1, 3, 2};
  CHECK(diagnostics::quantile(v, 0.0) == 1.0);
  CHECK(diagnostics::quantile(v, 1.0) == 4.0);
  CHECK(diagnostics::quantile(v, 0.5) == 2.5);
  CHECK(diagnostics::quantile(v, 0.25) == doctest::Approx(1.75));
}

TEST_CASE("R-hat and ESS on independent and shifted chains") {
  Rng rng(2);
  Eigen::MatrixXd iid(1000, 4);
  for (auto& x : iid.reshaped()) x = rng.normal();
  CHECK(diagnostics::split_rhat(iid) < 1.01);
  CHECK(diagnostics::bulk_ess(iid) > 3000);
  CHECK(diagnostics::ess(iid) > 3000);
  Eigen::MatrixXd shifted = iid;
  shifted.col(0).array() += 2.0;
  CHECK(diagnostics::split_rhat(shifted) > 1.1);

  Eigen::MatrixXd ar(1000, 4);
  for (int c = 0; c < 4; ++c) {
    double x = 0;
    for (int t = 0; t < 1000; ++t) ar(t, c) = x = 0.9 * x + rng.normal();
  }
  // AR(1) with phi 0.9: ESS about n (1 - phi) / (1 + phi)
  CHECK(diagnostics::ess(ar) == doctest::Approx(4000 * 0.1 / 1.9).epsilon(0.35));
}
