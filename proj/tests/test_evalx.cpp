#include <cmath>

#include <doctest.h>

#include "hwsc/error.hpp"
#include "hwsc/evalx.hpp"
#include "hwsc/rng.hpp"

using namespace hwsc;
using namespace hwsc::evalx;

TEST_CASE("perfect estimator") {
  Eigen::VectorXd truth(6);
  truth << 1, 2, 3, 4, 5, 6;
  const auto r = imputation_metrics({{truth, truth, truth, truth, 3}});
  CHECK(r.abs_avg_bias == 0.0);
  CHECK(r.rmse_pre == 0.0);
  CHECK(r.rmse_post == 0.0);
  CHECK(r.coverage_prob == 1.0);
  CHECK(r.avg_ci_length == 0.0);
}

TEST_CASE("constant offset") {
  Eigen::VectorXd truth = Eigen::VectorXd::LinSpaced(10, 0, 1);
  const Eigen::VectorXd pt = truth.array() + 0.3;
  const Eigen::VectorXd lo = truth.array() + 0.1, hi = truth.array() + 0.5;
  const auto r = imputation_metrics({{pt, lo, hi, truth, 4}});
  CHECK(r.abs_avg_bias == doctest::Approx(0.3));
  CHECK(r.rmse_post == doctest::Approx(0.3));
  CHECK(r.coverage_prob == 0.0);
  CHECK(r.avg_ci_length == doctest::Approx(0.4));
  const auto ols = imputation_metrics({{pt, {}, {}, truth, 4}});
  CHECK(std::isnan(ols.coverage_prob));
  CHECK_THROWS_AS(imputation_metrics({{pt.head(5), {}, {}, truth, 4}}), Error);
}

TEST_CASE("RMSE bounds the absolute bias") {
  Rng rng(3);
  std::vector<ImputedPath> paths;
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd t(30), p(30);
    for (int i = 0; i < 30; ++i) {
      t[i] = rng.normal();
      p[i] = t[i] + rng.normal(0.2, 1.0);
    }
    paths.push_back({p, {}, {}, t, 20});
  }
  const auto r = imputation_metrics(paths);
  CHECK(r.rmse_post >= r.abs_avg_bias);
}

TEST_CASE("DerSimonian-Laird against statsmodels") {
  const std::vector<MetaInput> in{{0.30, 0.004}, {0.05, 0.010}, {0.20, 0.006}, {0.12, 0.002}, {-0.10, 0.015}};
  const auto r = dl_meta(in);
  CHECK(r.tau2 == doctest::Approx(0.01011024423337855).epsilon(1e-10));
  CHECK(r.q == doctest::Approx(11.642307692307682).epsilon(1e-10));
  CHECK(r.log_rr == doctest::Approx(0.13796419072364252).epsilon(1e-10));
  CHECK(r.se == doctest::Approx(0.05725346995652491).epsilon(1e-10));
  CHECK(std::log(r.lower) == doctest::Approx(0.025749451618907654).epsilon(1e-9));
  CHECK(std::log(r.upper) == doctest::Approx(0.2501789298283774).epsilon(1e-9));
  CHECK(r.i2 == doctest::Approx(0.6564255037991408).epsilon(1e-10));
  CHECK(r.log_rr >= -0.10);
  CHECK(r.log_rr <= 0.30);

  const auto kh = dl_meta(in, true);
  CHECK(kh.knapp_hartung);
  CHECK(kh.se == doctest::Approx(0.06249665892312585).epsilon(1e-10));
  CHECK(std::log(kh.lower) == doctest::Approx(-0.0355543520346866).epsilon(1e-9));
}

TEST_CASE("DL special cases") {
  const auto one = dl_meta({{0.2, 0.01}});
  CHECK(one.log_rr == 0.2);
  CHECK(one.se == doctest::Approx(0.1));
  CHECK(one.tau2 == 0.0);
  const auto two = dl_meta({{0.10, 0.02}, {0.14, 0.02}});
  CHECK(two.tau2 == 0.0);
  CHECK(two.log_rr == doctest::Approx(0.12));
  CHECK_THROWS_AS(dl_meta({}), Error);
  CHECK_THROWS_AS(dl_meta({{0.1, 0.0}}), Error);
}

TEST_CASE("scenario report") {
  MetricsRow a{"NoSD-NoSp", "SC", 0.82, 1.311, 1.455, 0.936, 3.744, 25};
  MetricsRow b{"NoSD-NoSp", "SA-SC", 0.718, 1.21, 1.377, 0.948, 3.471, 25};
  const auto rep = scenario_report({b, a}, {"NoSD-NoSp"}, {"SC", "SA-SC"});
  CHECK(rep.complete());
  CHECK(rep.rows[0].method == "SC");
  CHECK(report_csv(rep) ==
        "scenario,method,abs_avg_bias,rmse_pre,rmse_post,coverage_prob,avg_ci_length,paths\n"
        "NoSD-NoSp,SC,0.820,1.311,1.455,0.936,3.744,25\n"
        "NoSD-NoSp,SA-SC,0.718,1.210,1.377,0.948,3.471,25\n");
  const auto empty = scenario_report({}, {"NoSD-NoSp", "SD-Sp"}, {"SC", "SA-SC"});
  CHECK(empty.rows.empty());
  CHECK(empty.missing.size() == 4);
  CHECK(report_json(empty).find("\"complete\": false") != std::string::npos);
}
