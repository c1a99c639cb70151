#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hwsc::evalx {

/// Imputed Y(0,0) path for one treated unit in one replication, with the
/// truth it is scored against. Days [0, t0) are pre, [t0, end) are post.
struct ImputedPath {
  Eigen::VectorXd point;
  Eigen::VectorXd lower;  // empty when the estimator has no intervals
  Eigen::VectorXd upper;
  Eigen::VectorXd truth;
  std::size_t t0 = 0;
};

struct MetricsRow {
  std::string scenario;
  std::string method;
  double abs_avg_bias = 0.0;
  double rmse_pre = 0.0;
  double rmse_post = 0.0;
  double coverage_prob = 0.0;  // NaN without intervals
  double avg_ci_length = 0.0;  // NaN without intervals
  std::size_t paths = 0;
};

/// Bias, coverage and interval length are averaged over post cells; RMSE is
/// reported separately for the pre and post windows.
MetricsRow imputation_metrics(const std::vector<ImputedPath>& paths, const std::string& scenario = "",
                              const std::string& method = "");

struct MetaInput {
  double log_rr = 0.0;
  double variance = 0.0;
};

struct MetaResult {
  std::size_t k = 0;
  double log_rr = 0.0;
  double se = 0.0;
  double tau2 = 0.0;
  double q = 0.0;
  double i2 = 0.0;
  double rr = 1.0;
  double lower = 1.0;
  double upper = 1.0;
  bool knapp_hartung = false;
};

/// DerSimonian-Laird random-effects pooling on the log scale, 95% interval.
MetaResult dl_meta(const std::vector<MetaInput>& inputs, bool knapp_hartung = false);

struct ScenarioReport {
  std::vector<MetricsRow> rows;          // grid order
  std::vector<std::string> missing;      // "scenario/method" cells with no row
  bool complete() const { return missing.empty(); }
};

/// Orders rows by the given scenario and method lists and records missing
/// cells. An empty `rows` yields an empty table with every cell missing.
ScenarioReport scenario_report(const std::vector<MetricsRow>& rows, const std::vector<std::string>& scenarios,
                               const std::vector<std::string>& methods);

std::string report_csv(const ScenarioReport& report);
std::string report_json(const ScenarioReport& report);

/// Fixed 3-decimal rendering used in metric tables.
std::string format_metric(double v);

}  // namespace hwsc::evalx
