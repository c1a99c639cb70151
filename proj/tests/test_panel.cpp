#include <cmath>
#include <sstream>

#include <doctest.h>

#include "hwsc/csv.hpp"
#include "hwsc/error.hpp"
#include "hwsc/panel.hpp"

using namespace hwsc;

namespace {

std::vector<Record> grid(int units, int days, int drop = -1) {
  std::vector<Record> out;
  int k = 0;
  for (int i = 0; i < units; ++i)
    for (int t = 0; t < days; ++t, ++k) {
      if (k == drop) continue;
      out.push_back({"U" + std::to_string(i), make_date(2010, 6, 1) + std::chrono::days{t}, double(k + 1), {}, {}});
    }
  return out;
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected hwsc::Error");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("complete grid builds a panel") {
  const auto p = build_panel(grid(2, 3));
  CHECK(p.n_units() == 2);
  CHECK(p.n_times() == 3);
  CHECK(p.outcome()(1, 2) == 6.0);
  CHECK(p.units()[0] == "U0");
}

TEST_CASE("217 x 30 simulation-sized panel") {
  const auto p = build_panel(grid(217, 30));
  CHECK(p.n_units() == 217);
  CHECK(p.n_times() == 30);
}

TEST_CASE("missing and duplicate cells") {
  CHECK(code_of([] { build_panel(grid(2, 3, 4)); }) == ErrorCode::MissingCell);
  auto recs = grid(2, 3);
  recs.push_back(recs.front());
  CHECK(code_of([&] { build_panel(recs); }) == ErrorCode::DuplicateCell);
}

TEST_CASE("csv round trip and row diagnostics") {
  const auto p = build_panel(grid(2, 3));
  std::istringstream in(panel_to_csv(p));
  const auto t = csv::read(in);
  CHECK(t.header == std::vector<std::string>{"unit_id", "date", "outcome"});
  CHECK(t.rows.size() == 6);
  try {
    csv::parse_double("abc", 7);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("line 7") != std::string::npos);
  }
  CHECK(csv::format_double(0.1) == "0.1");
}

TEST_CASE("zero-rate imputation then log") {
  Eigen::VectorXd s(3);
  s << 2, 0, 4;
  const auto imp = impute_zero_rates(s, 3);
  CHECK(imp[0] == 2.0);
  CHECK(imp[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(imp[2] == 4.0);

  Panel p({"A"}, {make_date(2010, 6, 1), make_date(2010, 6, 2), make_date(2010, 6, 3)}, s.transpose());
  const auto lp = log_transform_rates(p, 3);
  CHECK(lp.outcome()(0, 0) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(lp.outcome()(0, 1) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(lp.outcome()(0, 2) == doctest::Approx(1.3863).epsilon(1e-4));
  CHECK(lp.scale() == Scale::log_rate);
}

TEST_CASE("imputation is the identity on positive series") {
  Eigen::VectorXd s(4);
  s << 1.5, 2, 3, 0.25;
  CHECK(impute_zero_rates(s, 5) == s);
}

TEST_CASE("all-zero series cannot be logged") {
  Panel p({"A"}, {make_date(2010, 6, 1), make_date(2010, 6, 2)}, Eigen::MatrixXd::Zero(1, 2));
  CHECK(code_of([&] { log_transform_rates(p, 3); }) == ErrorCode::AllZeroWindow);
}

TEST_CASE("episode windows") {
  const auto p = build_panel(grid(3, 30));
  const EpisodeWindow w{0, 20, 20, 10};
  const auto s = slice_window(p, w, {1, 2});
  CHECK(s.treated_pre.size() == 20);
  CHECK(s.treated_post.size() == 10);
  CHECK(s.donors_pre.rows() == 20);
  CHECK(s.donors_pre.cols() == 2);
  CHECK(s.donors_post(0, 1) == p.outcome()(2, 20));

  const auto big = build_panel(grid(2, 70));
  CHECK(slice_window(big, {0, 60, 60, 10}, {1}).treated_pre.size() == 60);

  CHECK(code_of([&] { slice_window(p, {0, 5, 20, 10}, {1}); }) == ErrorCode::WindowOutOfRange);
}

TEST_CASE("dates") {
  CHECK(format_date(parse_date("2016-06-01")) == "2016-06-01");
  CHECK(year_of(make_date(2003, 7, 4)) == 2003);
  CHECK(code_of([] { parse_date("2016/06/01"); }) == ErrorCode::ParseError);
}
