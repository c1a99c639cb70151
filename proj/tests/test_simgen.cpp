#include <cmath>

#include <doctest.h>

#include "hwsc/error.hpp"
#include "hwsc/simgen.hpp"

using namespace hwsc;
using namespace hwsc::simgen;

namespace {

const Geography& geo10() {
  static const Geography g = synthetic_geography(10, 10, 20240601);
  return g;
}

geo::SeparationMatrix path_sep(int n) {
  geo::AdjacencyGraph g(static_cast<std::size_t>(n));
  for (int i = 0; i + 1 < n; ++i) g.add_edge(static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1);
  return geo::degrees_of_separation(g);
}

}  // namespace

TEST_CASE("scenario names") {
  CHECK(parse_scenario("sd+sp") == Scenario{true, true});
  CHECK(parse_scenario("none") == Scenario{false, false});
  CHECK(Scenario{false, true}.label() == "NoSD-Sp");
  CHECK(all_scenarios().size() == 4);
  CHECK(all_scenarios().front().label() == "NoSD-NoSp");
  CHECK_THROWS_AS(parse_scenario("spatial"), Error);
}

TEST_CASE("synthetic geography") {
  const auto& g = geo10();
  CHECK(g.size() == 100);
  CHECK(g.adjacency.neighbors(0).size() == 3);   // corner, queen contiguity
  CHECK(g.adjacency.neighbors(55).size() == 8);  // interior
  CHECK(g.separation(0, 99) == 9);
  const Eigen::MatrixXd W(g.W.W);
  CHECK((W.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("only unit effects survive when every other variance vanishes") {
  DgpConfig c;
  c.scenario = {false, false};
  c.sigma_b = c.sigma_gamma = c.sigma_u = c.sigma_eps = 1e-300;
  c.sigma_f = {1e-300, 1e-300};
  const auto b = gen_baseline(c, geo10().W, 5);
  for (Eigen::Index i = 0; i < b.y00.rows(); ++i)
    CHECK((b.y00.row(i).array() - b.alpha[i]).abs().maxCoeff() < 1e-200);
}

TEST_CASE("spatially smoothed unit effects match a direct solve") {
  DgpConfig c;
  c.scenario = {true, false};
  const auto b = gen_baseline(c, geo10().W, 17);
  Rng rng(17);
  Eigen::VectorXd nu(100);
  for (auto& x : nu) x = c.sigma_alpha * rng.normal();
  const Eigen::MatrixXd W(geo10().W.W);
  const Eigen::VectorXd direct = (Eigen::MatrixXd::Identity(100, 100) - c.varpi_alpha * W).partialPivLu().solve(nu);
  CHECK((b.alpha - direct).cwiseAbs().maxCoeff() < 1e-10);

  c.scenario = {false, false};
  CHECK((gen_baseline(c, geo10().W, 17).alpha - nu).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("treatment effects") {
  DgpConfig c;
  c.pre_len = 4;
  Eigen::MatrixXd heat(1, 6);
  // pre mean 0, sd 1 -> h~ equals the raw value
  const double a = std::sqrt(0.75);
  heat << -a, a, -a, a, 1.0, 0.0;
  exposure::TreatmentMask m = exposure::TreatmentMask::Zero(1, 6);
  m(0, 4) = m(0, 5) = 1;
  const auto tau = gen_treatment_effects(heat, m, c);
  CHECK(tau(0, 4) == doctest::Approx(5.7 * (std::exp(0.65) - 1.0)).epsilon(1e-12));
  CHECK(tau(0, 4) == doctest::Approx(5.218582725379209).epsilon(1e-12));
  CHECK(tau(0, 5) == 0.0);
  CHECK(tau(0, 0) == 1.0);
  CHECK(observe(2.0, tau(0, 5), EffectMode::multiplicative) == 0.0);
  CHECK(observe(2.0, 1.1, EffectMode::additive_log) == doctest::Approx(2.0 + std::log(1.1)));

  Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(1, 6, 80.0);
  CHECK_THROWS_AS(gen_treatment_effects(flat, m, c), Error);
}

TEST_CASE("spillovers on a path") {
  const auto sep = path_sep(5);
  exposure::TreatmentMask m = exposure::TreatmentMask::Zero(5, 3);
  m(0, 1) = m(0, 2) = 1;
  Eigen::MatrixXd tau = Eigen::MatrixXd::Ones(5, 3);
  tau(0, 1) = 2.0;
  tau(0, 2) = 3.0;
  const auto psi = gen_spillovers(tau, sep, {0.7, 0.4}, m);
  CHECK(psi(1, 1) == doctest::Approx(1.4));
  CHECK(psi(1, 2) == doctest::Approx(2.1));
  CHECK(psi(2, 2) == doctest::Approx(1.2));
  CHECK(psi(1, 0) == 1.0);
  CHECK(psi(3, 2) == 1.0);
  CHECK(psi(0, 2) == 1.0);
}

TEST_CASE("spillovers match an exhaustive loop on a random graph") {
  Rng rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 15, T = 6;
    geo::AdjacencyGraph g(n);
    for (int k = 0; k < 22; ++k) {
      const auto a = rng.uniform_int(0, n - 1), b = rng.uniform_int(0, n - 1);
      if (a != b) g.add_edge(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
    }
    const auto sep = geo::degrees_of_separation(g);
    exposure::TreatmentMask m = exposure::TreatmentMask::Zero(n, T);
    Eigen::MatrixXd tau = Eigen::MatrixXd::Ones(n, T);
    for (int k = 0; k < 3; ++k) {
      const auto i = rng.uniform_int(0, n - 1);
      for (int t = static_cast<int>(rng.uniform_int(0, T - 1)); t < T; ++t) {
        m(i, t) = 1;
        tau(i, t) = rng.uniform(0.5, 4.0);
      }
    }
    const std::vector<double> chi{0.7, 0.4};
    const auto psi = gen_spillovers(tau, sep, chi, m);
    for (int j = 0; j < n; ++j) {
      const bool treated_j = m.row(j).any();
      int smin = 1 << 30;
      for (int i = 0; i < n; ++i)
        if (m.row(i).any() && sep.reachable(i, j)) smin = std::min(smin, sep(i, j));
      for (int t = 0; t < T; ++t) {
        double expect = 1.0;
        if (!treated_j && smin >= 1 && smin <= 2) {
          double sum = 0;
          int cnt = 0;
          for (int i = 0; i < n; ++i)
            if (m(i, t) && sep(i, j) == smin) {
              sum += tau(i, t);
              ++cnt;
            }
          if (cnt) expect = chi[smin - 1] * sum / cnt;
        }
        CHECK(psi(j, t) == doctest::Approx(expect).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("calibration") {
  Eigen::MatrixXd y(2, 4);
  y << 0.1, 0.2, 0.3, 0.4, 1.0, 1.0, 1.0, 1.0;
  const Eigen::MatrixXd exact = y.array().exp();
  CHECK(calibrate_levels(y, exact, 3).shifts.cwiseAbs().maxCoeff() < 1e-15);
  const auto c = calibrate_levels(y, Eigen::MatrixXd::Constant(2, 4, 5.0), 4);
  CHECK(c.shifts[1] == doctest::Approx(std::log(5.0) - 1.0).epsilon(1e-15));

  Rng rng(1);
  Eigen::MatrixXd tgt(2, 4);
  for (auto& x : tgt.reshaped()) x = rng.uniform(0.5, 3.0);
  const auto r = calibrate_levels(y, tgt, 3);
  for (int i = 0; i < 2; ++i)
    CHECK(std::abs(r.shifted.row(i).head(3).mean() - tgt.row(i).head(3).array().log().mean()) < 1e-12);
  tgt(0, 0) = -1;
  CHECK_THROWS_AS(calibrate_levels(y, tgt, 3), Error);
}

TEST_CASE("replications") {
  DgpConfig c;
  c.scenario = {false, false};
  const auto a = run_replication(c, geo10(), {}, 0);
  const auto b = run_replication(c, geo10(), {}, 0);
  CHECK(a.panel.outcome() == b.panel.outcome());
  CHECK(a.y00 == b.y00);
  CHECK(a.treated == b.treated);
  CHECK((a.psi.array() == 1.0).all());
  CHECK(a.panel.n_times() == 30);
  CHECK(a.t0 == 20);
  CHECK(a.seed == 61116);
  CHECK(format_date(a.panel.days()[a.t0]) == std::to_string(a.year) + "-06-01");
  CHECK(std::find(a.treated.begin(), a.treated.end(), a.focal_unit) != a.treated.end());
  for (auto u : a.treated) CHECK(a.mask.row(static_cast<Eigen::Index>(u)).cast<int>().sum() == 10);
  CHECK(a.year >= 2000);
  CHECK(a.year <= 2016);

  c.scenario = {true, true};
  const auto s = run_replication(c, geo10(), {}, 3);
  bool any_spill = false;
  for (Eigen::Index i = 0; i < s.cells.rows(); ++i)
    for (Eigen::Index t = 0; t < s.cells.cols(); ++t)
      if (s.cells(i, t) == static_cast<std::uint8_t>(CellClass::spillover)) {
        any_spill = true;
        CHECK(s.panel.outcome()(i, t) == doctest::Approx(s.y00(i, t) * s.psi(i, t)));
      }
  CHECK(any_spill);
  CHECK(ground_truth_csv(s).rfind("unit_id,date,y00,tau,psi,cell,observed\n", 0) == 0);

  c.effect_mode = EffectMode::additive_log;
  c.constant_effect = 1.1;
  const auto k = run_replication(c, geo10(), {}, 3);
  for (auto u : k.treated)
    CHECK(k.panel.outcome()(u, 25) - k.y00(u, 25) == doctest::Approx(std::log(1.1)).epsilon(1e-12));
}
