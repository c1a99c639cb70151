#include <cmath>

#include <doctest.h>

#include "hwsc/diagnostics.hpp"
#include "hwsc/error.hpp"
#include "hwsc/hmc.hpp"
#include "hwsc/rng.hpp"
#include "hwsc/sasc.hpp"

using namespace hwsc;
using namespace hwsc::sasc;

namespace {

SascData make_random_data(Rng& rng, int J, int pre = 20, int post = 10, bool zero_d = false) {
  SascData d;
  d.Y_pre.resize(pre, J);
  d.Y_post.resize(post, J);
  for (auto& x : d.Y_pre.reshaped()) x = rng.normal();
  for (auto& x : d.Y_post.reshaped()) x = rng.normal();
  d.y_pre.resize(pre);
  for (auto& x : d.y_pre) x = rng.normal();
  d.d.resize(J);
  for (auto& x : d.d) x = zero_d ? 0.0 : rng.uniform();
  return d;
}

Eigen::VectorXd random_theta(Rng& rng, int dim) {
  Eigen::VectorXd t(dim);
  for (auto& x : t) x = rng.uniform(-1.5, 1.5);
  return t;
}

}  // namespace

TEST_CASE("centred softmax") {
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(4, 2.5);
  CHECK((softmax_centered(eta) - Eigen::VectorXd::Constant(4, 0.25)).norm() < 1e-15);
  Eigen::Vector3d e(10, 0, 0);
  const auto w = softmax_centered(e);
  CHECK(w[0] == doctest::Approx(0.999909208).epsilon(1e-8));
  CHECK(w[1] == doctest::Approx(4.53958078e-05).epsilon(1e-8));
  Eigen::Vector3d shifted = e.array() + 123.25;
  CHECK(softmax_centered(shifted) == w);
  CHECK(std::abs(w.sum() - 1.0) < 1e-12);
}

TEST_CASE("gradient matches central differences") {
  Rng rng(21);
  for (auto prior : {Prior::spatial, Prior::non_spatial}) {
    const Model m(make_random_data(rng, 6), prior);
    for (int rep = 0; rep < 10; ++rep) {
      const auto th = random_theta(rng, m.dim());
      Eigen::VectorXd g;
      m.log_posterior(th, g);
      for (int k = 0; k < m.dim(); ++k) {
        auto a = th, b = th;
        a[k] += 1e-5;
        b[k] -= 1e-5;
        const double fd = (m.log_posterior(a) - m.log_posterior(b)) / 2e-5;
        CHECK(std::abs(fd - g[k]) <= 1e-5 * std::max(1.0, std::abs(g[k])));
      }
    }
  }
}

TEST_CASE("zero distances make the spatial scale a pure prior term") {
  Rng rng(4);
  const auto data = make_random_data(rng, 5, 20, 10, true);
  const Model sp(data, Prior::spatial);
  const Model ns = disable_spatial_prior(data);
  auto th = random_theta(rng, sp.dim());
  const Eigen::VectorXd th_ns = th.head(ns.dim());
  auto prior_vs = [](double lv) { return -0.5 * std::exp(2 * lv) + lv; };
  for (double lv : {-1.0, 0.0, 0.7}) {
    th[sp.dim() - 1] = lv;
    CHECK(sp.log_posterior(th) - ns.log_posterior(th_ns) == doctest::Approx(prior_vs(lv)).epsilon(1e-12));
  }
}

TEST_CASE("one donor reduces to a normal likelihood") {
  Rng rng(6);
  const auto data = make_random_data(rng, 1);
  const Model m(data, Prior::spatial);
  auto a = random_theta(rng, m.dim());
  auto b = a;
  b[0] = a[0] + 1.3;
  CHECK(m.weights(a)[0] == 1.0);
  CHECK(m.log_posterior(a) - m.log_posterior(b) == doctest::Approx(-0.5 * (a[0] * a[0] - b[0] * b[0])).epsilon(1e-12));
}

TEST_CASE("invalid model data") {
  SascData d;
  CHECK_THROWS_AS(d.validate(), Error);
  Rng rng(1);
  auto ok = make_random_data(rng, 3);
  ok.d[1] = -1;
  CHECK_THROWS_AS(ok.validate(), Error);
}

TEST_CASE("leapfrog reversibility and second-order energy error") {
  Rng rng(9);
  const Model m(make_random_data(rng, 4), Prior::spatial);
  const hmc::LogDensity f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return m.log_posterior(x, g); };
  const Eigen::VectorXd inv = Eigen::VectorXd::Ones(m.dim());
  hmc::PhasePoint s;
  s.q = random_theta(rng, m.dim()) * 0.3;
  s.p.resize(m.dim());
  for (auto& x : s.p) x = rng.normal();
  s.logp = f(s.q, s.grad);
  const auto start = s;
  hmc::leapfrog(f, s, 0.01, inv, 20);
  s.p = -s.p;
  hmc::leapfrog(f, s, 0.01, inv, 20);
  CHECK((s.q - start.q).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((s.p + start.p).cwiseAbs().maxCoeff() < 1e-8);

  std::vector<double> errs;
  for (double h : {0.004, 0.002, 0.001}) {
    auto x = start;
    hmc::leapfrog(f, x, h, inv, static_cast<int>(std::lround(0.08 / h)));
    errs.push_back(std::abs(hmc::hamiltonian(x, inv) - hmc::hamiltonian(start, inv)));
  }
  CHECK(errs[0] / errs[1] == doctest::Approx(4.0).epsilon(0.25));
  CHECK(errs[1] / errs[2] == doctest::Approx(4.0).epsilon(0.25));
}

TEST_CASE("HMC recovers a correlated Gaussian mean") {
  Eigen::Vector2d mu(1.0, -2.0);
  Eigen::Matrix2d S;
  S << 1.0, 0.15, 0.15, 0.25;
  const Eigen::Matrix2d P = S.inverse();
  const hmc::LogDensity f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const Eigen::Vector2d r = x - mu;
    g = -P * r;
    return -0.5 * r.dot(P * r);
  };
  hmc::Options o;
  o.iters = 1500;
  o.warmup = 500;
  o.leapfrog_steps = 8;
  const auto chains = hmc::run_chains(f, 2, 4, o, 99);
  for (int k = 0; k < 2; ++k) {
    Eigen::MatrixXd cols(chains[0].draws.rows(), 4);
    for (int c = 0; c < 4; ++c) cols.col(c) = chains[c].draws.col(k);
    const double mean = cols.mean();
    const double mcse = std::sqrt(S(k, k) / diagnostics::ess(cols));
    CHECK(std::abs(mean - mu[k]) < 3 * mcse);
    CHECK(diagnostics::split_rhat(cols) < 1.01);
  }
}

TEST_CASE("sampling is deterministic per seed") {
  Rng rng(12);
  const auto data = make_random_data(rng, 4);
  SamplerConfig cfg;
  cfg.chains = 2;
  cfg.hmc.iters = 200;
  cfg.hmc.warmup = 100;
  cfg.seed = 5;
  const auto a = sample_posterior(data, Prior::spatial, cfg);
  const auto b = sample_posterior(data, Prior::spatial, cfg);
  CHECK(a.weights == b.weights);
  CHECK(a.sigma == b.sigma);
  cfg.seed = 6;
  CHECK(sample_posterior(data, Prior::spatial, cfg).weights != a.weights);
  cfg.chains = 1;
  CHECK_THROWS_AS(sample_posterior(data, Prior::spatial, cfg), Error);
  for (Eigen::Index k = 0; k < a.weights.rows(); ++k) CHECK(std::abs(a.weights.row(k).sum() - 1.0) < 1e-12);
}

TEST_CASE("posterior predictive") {
  Rng rng(14);
  const auto data = make_random_data(rng, 3);
  PosteriorDraws d;
  d.weights = Eigen::MatrixXd::Zero(50, 3);
  d.weights.col(0).setOnes();
  d.sigma = Eigen::VectorXd::Constant(50, 1e-12);
  d.seed = 3;
  const auto fit = posterior_predictive(d, data);
  CHECK((fit.post.median - data.Y_post.col(0)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((fit.post.upper - fit.post.lower).maxCoeff() < 1e-10);

  for (Eigen::Index k = 0; k < 50; ++k) {
    Eigen::Vector3d w(rng.uniform(), rng.uniform(), rng.uniform());
    d.weights.row(k) = (w / w.sum()).transpose();
  }
  const auto fit2 = posterior_predictive(d, data);
  for (Eigen::Index t = 0; t < data.Y_post.rows(); ++t) {
    double acc = 0.0;
    for (int j = 0; j < 3; ++j) {
      double wj = 0.0;
      for (Eigen::Index k = 0; k < 50; ++k) wj += d.weights(k, j);
      acc += data.Y_post(t, j) * wj / 50.0;
    }
    CHECK(fit2.post.point[t] == doctest::Approx(acc).epsilon(1e-13));
  }
}

TEST_CASE("relative risk posteriors") {
  SascFit a, b;
  a.post.draws = Eigen::MatrixXd::Constant(20, 5, 2.0);
  b.post.draws = Eigen::MatrixXd::Constant(20, 5, 2.0);
  const Eigen::VectorXd obs_a = Eigen::VectorXd::Constant(5, 2.0);
  const Eigen::VectorXd obs_b = Eigen::VectorXd::Constant(5, 2.4);
  CHECK(relative_risk_posterior(a, obs_a, Scale::raw_rate).median == 1.0);
  const auto agg = aggregate_rrt({a, b}, {obs_a, obs_b}, Scale::raw_rate);
  CHECK(agg.mean == doctest::Approx(1.1).epsilon(1e-14));
  SascFit z;
  z.post.draws = Eigen::MatrixXd::Zero(3, 5);
  CHECK_THROWS_AS(relative_risk_posterior(z, obs_a, Scale::raw_rate), Error);
}

TEST_CASE("spatial prior favours near donors when donors are exchangeable") {
  // every donor carries the treated series plus independent noise; half are near
  Rng rng(31);
  SascData d;
  const int J = 10, T = 20;
  d.y_pre.resize(T);
  for (auto& x : d.y_pre) x = rng.normal();
  d.Y_pre.resize(T, J);
  d.Y_post.resize(5, J);
  d.d.resize(J);
  for (int j = 0; j < J; ++j) {
    for (int t = 0; t < T; ++t) d.Y_pre(t, j) = d.y_pre[t] + 0.5 * rng.normal();
    for (int t = 0; t < 5; ++t) d.Y_post(t, j) = rng.normal();
    d.d[j] = j < J / 2 ? 0.1 : 1.0;
  }
  SamplerConfig cfg;
  cfg.chains = 4;
  cfg.hmc.iters = 1000;
  cfg.hmc.warmup = 400;
  cfg.seed = 77;
  const auto sp = sample_posterior(d, Prior::spatial, cfg);
  const auto ns = sample_posterior(d, Prior::non_spatial, cfg);
  const double near_sp = sp.weights.leftCols(J / 2).sum() / static_cast<double>(sp.weights.rows());
  const double near_ns = ns.weights.leftCols(J / 2).sum() / static_cast<double>(ns.weights.rows());
  CHECK(near_sp > near_ns);
}
