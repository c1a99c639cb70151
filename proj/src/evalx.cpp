#include "hwsc/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "hwsc/error.hpp"

namespace hwsc::evalx {

MetricsRow imputation_metrics(const std::vector<ImputedPath>& paths, const std::string& scenario,
                              const std::string& method) {
  MetricsRow row;
  row.scenario = scenario;
  row.method = method;
  row.paths = paths.size();
  double abs_sum = 0.0, sq_pre = 0.0, sq_post = 0.0, cover = 0.0, length = 0.0;
  std::size_t n_pre = 0, n_post = 0, n_int = 0;
  for (const auto& p : paths) {
    const auto T = p.truth.size();
    if (p.point.size() != T) throw Error(ErrorCode::Misalignment, "imputed path length differs from truth");
    const bool has_int = p.lower.size() > 0 || p.upper.size() > 0;
    if (has_int && (p.lower.size() != T || p.upper.size() != T)) {
      throw Error(ErrorCode::Misalignment, "interval length differs from truth");
    }
    if (p.t0 > static_cast<std::size_t>(T)) throw Error(ErrorCode::Misalignment, "t0 beyond path");
    for (Eigen::Index t = 0; t < T; ++t) {
      const double e = p.point[t] - p.truth[t];
      if (static_cast<std::size_t>(t) < p.t0) {
        sq_pre += e * e;
        ++n_pre;
        continue;
      }
      abs_sum += std::abs(e);
      sq_post += e * e;
      ++n_post;
      if (has_int) {
        cover += (p.truth[t] >= p.lower[t] && p.truth[t] <= p.upper[t]) ? 1.0 : 0.0;
        length += p.upper[t] - p.lower[t];
        ++n_int;
      }
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  row.abs_avg_bias = n_post ? abs_sum / n_post : nan;
  row.rmse_pre = n_pre ? std::sqrt(sq_pre / n_pre) : nan;
  row.rmse_post = n_post ? std::sqrt(sq_post / n_post) : nan;
  row.coverage_prob = n_int ? cover / n_int : nan;
  row.avg_ci_length = n_int ? length / n_int : nan;
  return row;
}

MetaResult dl_meta(const std::vector<MetaInput>& inputs, bool knapp_hartung) {
  if (inputs.empty()) throw Error(ErrorCode::InvalidArgument, "dl_meta needs at least one input");
  for (const auto& in : inputs) {
    if (!(in.variance > 0.0) || !std::isfinite(in.variance) || !std::isfinite(in.log_rr)) {
      throw Error(ErrorCode::InvalidArgument, "meta inputs need finite log RR and positive variance");
    }
  }
  const auto k = inputs.size();
  double sw = 0.0, sw2 = 0.0, swy = 0.0;
  for (const auto& in : inputs) {
    const double w = 1.0 / in.variance;
    sw += w;
    sw2 += w * w;
    swy += w * in.log_rr;
  }
  const double fixed = swy / sw;
  double q = 0.0;
  for (const auto& in : inputs) q += (in.log_rr - fixed) * (in.log_rr - fixed) / in.variance;

  MetaResult r;
  r.k = k;
  r.q = q;
  r.knapp_hartung = knapp_hartung && k > 1;
  const double df = static_cast<double>(k) - 1.0;
  r.tau2 = k > 1 ? std::max(0.0, (q - df) / (sw - sw2 / sw)) : 0.0;
  r.i2 = (k > 1 && q > 0.0) ? std::max(0.0, (q - df) / q) : 0.0;

  double sws = 0.0, swsy = 0.0;
  for (const auto& in : inputs) {
    const double w = 1.0 / (in.variance + r.tau2);
    sws += w;
    swsy += w * in.log_rr;
  }
  r.log_rr = swsy / sws;
  double crit = boost::math::quantile(boost::math::normal(), 0.975);
  r.se = std::sqrt(1.0 / sws);
  if (r.knapp_hartung) {
    double acc = 0.0;
    for (const auto& in : inputs) acc += (in.log_rr - r.log_rr) * (in.log_rr - r.log_rr) / (in.variance + r.tau2);
    r.se = std::sqrt(acc / (df * sws));
    crit = boost::math::quantile(boost::math::students_t(df), 0.975);
  }
  r.rr = std::exp(r.log_rr);
  r.lower = std::exp(r.log_rr - crit * r.se);
  r.upper = std::exp(r.log_rr + crit * r.se);
  return r;
}

ScenarioReport scenario_report(const std::vector<MetricsRow>& rows, const std::vector<std::string>& scenarios,
                               const std::vector<std::string>& methods) {
  ScenarioReport rep;
  for (const auto& s : scenarios) {
    for (const auto& m : methods) {
      auto it = std::find_if(rows.begin(), rows.end(), [&](const MetricsRow& r) { return r.scenario == s && r.method == m; });
      if (it == rows.end()) {
        rep.missing.push_back(s + "/" + m);
      } else {
        rep.rows.push_back(*it);
      }
    }
  }
  return rep;
}

std::string format_metric(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string report_csv(const ScenarioReport& report) {
  std::ostringstream out;
  out << "scenario,method,abs_avg_bias,rmse_pre,rmse_post,coverage_prob,avg_ci_length,paths\n";
  for (const auto& r : report.rows) {
    out << r.scenario << ',' << r.method << ',' << format_metric(r.abs_avg_bias) << ',' << format_metric(r.rmse_pre)
        << ',' << format_metric(r.rmse_post) << ',' << format_metric(r.coverage_prob) << ','
        << format_metric(r.avg_ci_length) << ',' << r.paths << '\n';
  }
  return out.str();
}

std::string report_json(const ScenarioReport& report) {
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  auto num = [](double v) { return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(std::stod(format_metric(v))); };
  for (const auto& r : report.rows) {
    nlohmann::ordered_json row;
    row["scenario"] = r.scenario;
    row["method"] = r.method;
    row["abs_avg_bias"] = num(r.abs_avg_bias);
    row["rmse_pre"] = num(r.rmse_pre);
    row["rmse_post"] = num(r.rmse_post);
    row["coverage_prob"] = num(r.coverage_prob);
    row["avg_ci_length"] = num(r.avg_ci_length);
    row["paths"] = r.paths;
    j["rows"].push_back(row);
  }
  j["missing"] = report.missing;
  j["complete"] = report.complete();
  return j.dump(2) + "\n";
}

}  // namespace hwsc::evalx
