#include <doctest.h>

#include "hwsc/evalx.hpp"
#include "hwsc/pipeline.hpp"

using namespace hwsc;
using namespace hwsc::pipeline;

TEST_CASE("method and policy names") {
  CHECK(parse_method("sc-ols") == Method::sc_ols);
  CHECK(table_label(Method::bsc) == "SC");
  CHECK(table_label(Method::sasc) == "SA-SC");
  CHECK(parse_donor_policy("contaminated") == DonorPolicy::contaminated);
}

TEST_CASE("small grid is reproducible and independent of worker count") {
  SimRunConfig c;
  c.reps = 2;
  c.scenarios = {simgen::parse_scenario("sd+sp")};
  c.estimator.chains = 2;
  c.estimator.hmc.iters = 200;
  c.estimator.hmc.warmup = 100;
  c.methods = {Method::sc_ols, Method::sasc};
  const auto a = run_simulation_grid(c);
  c.workers = 2;
  const auto b = run_simulation_grid(c);
  CHECK(evalx::report_csv(a.report) == evalx::report_csv(b.report));
  CHECK(a.report.rows.size() == 2);
  CHECK(a.replications.size() == 2);
  CHECK(a.report.rows[0].method == "SC-OLS");
}
