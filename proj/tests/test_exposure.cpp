#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "hwsc/error.hpp"
#include "hwsc/exposure.hpp"
#include "hwsc/rng.hpp"

using namespace hwsc;
using namespace hwsc::exposure;

namespace {

std::vector<Date> days_from(Date start, int n) {
  std::vector<Date> d;
  for (int t = 0; t < n; ++t) d.push_back(start + std::chrono::days{t});
  return d;
}

Panel heat_panel(const Eigen::VectorXd& h, Date start) {
  return Panel({"A"}, days_from(start, static_cast<int>(h.size())), Eigen::MatrixXd::Zero(1, h.size()),
               Eigen::MatrixXd(h.transpose()));
}

}  // namespace

TEST_CASE("nearest-rank percentile") {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[i] = 100 - i;
  CHECK(percentile_threshold(v, 95) == 95.0);
  CHECK(percentile_threshold(v, 99) == 99.0);
  std::vector<double> c(37, 4.25);
  CHECK(percentile_threshold(c, 97) == 4.25);
  CHECK_THROWS_AS(percentile_threshold(std::vector<double>{}, 95), Error);
}

TEST_CASE("per-year reference gives one threshold per year") {
  auto days = days_from(make_date(2010, 12, 1), 62);
  Eigen::VectorXd h(62);
  for (int t = 0; t < 62; ++t) h[t] = t < 31 ? t : 100 + t;
  HeatwaveDefinition def;
  const auto q = unit_thresholds(h, days, def);
  CHECK(q[0] == q[30]);
  CHECK(q[31] == q[61]);
  CHECK(q[0] != q[31]);
  CHECK(q[0] == 29.0);  // ceil(0.95*31)=30th smallest of 0..30
}

TEST_CASE("duration criterion") {
  Eigen::VectorXd h = Eigen::VectorXd::LinSpaced(40, 0.0, -0.39);
  h[10] = 10;
  HeatwaveDefinition def;
  def.percentile = 97.5;  // two exceedances: day 0 and day 10
  def.reference = Reference::whole_period;
  CHECK(detect_heatwaves(heat_panel(h, make_date(2010, 6, 1)), def).episodes.empty());
  h[20] = h[21] = h[22] = 10;
  const auto det = detect_heatwaves(heat_panel(h, make_date(2010, 6, 1)), def);
  REQUIRE(det.episodes.size() == 1);  // the spike at 10 is a single day
  CHECK(det.episodes[0].start == 20);
  CHECK(det.episodes[0].length == 3);
  CHECK(det.mask.cast<int>().sum() == 3);
}

TEST_CASE("detector properties on random series") {
  Rng rng(17);
  const auto days = days_from(make_date(2012, 5, 1), 200);
  for (int rep = 0; rep < 30; ++rep) {
    Eigen::VectorXd h(200);
    for (auto& x : h) x = std::round(rng.normal(80, 6));
    const auto p = heat_panel(h, days.front());
    HeatwaveDefinition def;
    std::size_t prev_days = 1u << 30;
    for (double r : {90.0, 95.0, 97.0, 99.0}) {
      def.percentile = r;
      const auto det = detect_heatwaves(p, def);
      std::size_t marked = 0;
      for (const auto& e : det.episodes) marked += e.length;
      CHECK(static_cast<std::size_t>(det.mask.cast<int>().sum()) == marked);
      CHECK(marked <= prev_days);
      prev_days = marked;
    }
    def.percentile = 90;
    def.min_duration = 2;
    const auto n2 = detect_heatwaves(p, def).episodes.size();
    def.min_duration = 3;
    CHECK(detect_heatwaves(p, def).episodes.size() <= n2);
  }
}

TEST_CASE("first of season") {
  const auto days = days_from(make_date(2010, 4, 1), 500);
  const SeasonBounds season{};
  auto idx = [&](int y, unsigned m, unsigned d) {
    return static_cast<std::size_t>((make_date(y, m, d) - days.front()).count());
  };
  std::vector<HeatwaveEpisode> eps{{0, idx(2010, 6, 1), 3}, {0, idx(2010, 7, 10), 2}, {0, idx(2011, 6, 5), 2},
                                   {1, idx(2010, 4, 20), 2}};
  const auto kept = first_of_season(eps, days, season);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0] == eps[0]);
  CHECK(kept[1] == eps[2]);
  CHECK(first_of_season({}, days, season).empty());
}

TEST_CASE("definition validation") {
  HeatwaveDefinition def;
  def.percentile = 100;
  CHECK_THROWS_AS(def.validate(), Error);
  def.percentile = 95;
  def.min_duration = 0;
  CHECK_THROWS_AS(def.validate(), Error);
}
