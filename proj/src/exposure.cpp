#include "hwsc/exposure.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "hwsc/csv.hpp"
#include "hwsc/error.hpp"

namespace hwsc::exposure {

Reference parse_reference(const std::string& s) {
  if (s == "per-year" || s == "per_year") return Reference::per_year;
  if (s == "whole-period" || s == "whole_period") return Reference::whole_period;
  if (s == "warm-season" || s == "warm_season") return Reference::warm_season;
  throw Error(ErrorCode::InvalidArgument, "unknown reference '" + s + "'");
}

std::string to_string(Reference r) {
  switch (r) {
    case Reference::per_year: return "per-year";
    case Reference::whole_period: return "whole-period";
    case Reference::warm_season: return "warm-season";
  }
  return "per-year";
}

bool SeasonBounds::contains(Date d) const {
  const std::chrono::year_month_day ymd{d};
  const auto key = static_cast<unsigned>(ymd.month()) * 100 + static_cast<unsigned>(ymd.day());
  return key >= start_month * 100 + start_day && key <= end_month * 100 + end_day;
}

void HeatwaveDefinition::validate() const {
  if (!(percentile > 0.0 && percentile < 100.0)) throw Error(ErrorCode::InvalidArgument, "percentile must be in (0,100)");
  if (min_duration < 1) throw Error(ErrorCode::InvalidArgument, "min_duration must be >= 1");
}

double percentile_threshold(std::span<const double> series, double r) {
  if (series.empty()) throw Error(ErrorCode::EmptySeries, "percentile of an empty series");
  for (double x : series) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteValue, "percentile input");
  }
  std::vector<double> v(series.begin(), series.end());
  const auto n = v.size();
  // r * n is exact for integer percentiles, so the ceiling does not pick up rounding noise.
  auto rank = static_cast<std::size_t>(std::ceil(r * static_cast<double>(n) / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank - 1), v.end());
  return v[rank - 1];
}

Eigen::VectorXd unit_thresholds(const Eigen::VectorXd& heat, const std::vector<Date>& days,
                                const HeatwaveDefinition& def) {
  const auto n = static_cast<std::size_t>(heat.size());
  if (days.size() != n) throw Error(ErrorCode::DimensionMismatch, "heat vs days");
  Eigen::VectorXd q(heat.size());
  switch (def.reference) {
    case Reference::whole_period: {
      q.setConstant(percentile_threshold(std::span<const double>(heat.data(), n), def.percentile));
      break;
    }
    case Reference::warm_season: {
      std::vector<double> in_season;
      for (std::size_t t = 0; t < n; ++t) {
        if (def.season.contains(days[t])) in_season.push_back(heat[static_cast<Eigen::Index>(t)]);
      }
      if (in_season.empty()) throw Error(ErrorCode::EmptySeries, "no warm-season days in panel");
      q.setConstant(percentile_threshold(in_season, def.percentile));
      break;
    }
    case Reference::per_year: {
      std::map<int, std::vector<double>> by_year;
      for (std::size_t t = 0; t < n; ++t) by_year[year_of(days[t])].push_back(heat[static_cast<Eigen::Index>(t)]);
      std::map<int, double> thr;
      for (const auto& [y, v] : by_year) thr[y] = percentile_threshold(v, def.percentile);
      for (std::size_t t = 0; t < n; ++t) q[static_cast<Eigen::Index>(t)] = thr.at(year_of(days[t]));
      break;
    }
  }
  return q;
}

std::vector<std::pair<std::size_t, std::size_t>> exceedance_runs(const Eigen::VectorXd& heat,
                                                                 const Eigen::VectorXd& thresholds,
                                                                 int min_duration) {
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  const auto n = static_cast<std::size_t>(heat.size());
  std::size_t t = 0;
  while (t < n) {
    if (heat[static_cast<Eigen::Index>(t)] >= thresholds[static_cast<Eigen::Index>(t)]) {
      const std::size_t start = t;
      while (t < n && heat[static_cast<Eigen::Index>(t)] >= thresholds[static_cast<Eigen::Index>(t)]) ++t;
      if (t - start >= static_cast<std::size_t>(min_duration)) runs.emplace_back(start, t - start);
    } else {
      ++t;
    }
  }
  return runs;
}

Detection detect_heatwaves(const Panel& panel, const HeatwaveDefinition& def) {
  def.validate();
  if (!panel.heat()) throw Error(ErrorCode::InvalidArgument, "panel has no heat series");
  const auto& H = *panel.heat();
  Detection out;
  out.mask = TreatmentMask::Zero(H.rows(), H.cols());
  for (Eigen::Index i = 0; i < H.rows(); ++i) {
    const Eigen::VectorXd row = H.row(i).transpose();
    const auto q = unit_thresholds(row, panel.days(), def);
    for (const auto& [start, len] : exceedance_runs(row, q, def.min_duration)) {
      out.episodes.push_back({static_cast<std::size_t>(i), start, len});
      out.mask.row(i).segment(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)).setOnes();
    }
  }
  return out;
}

std::vector<HeatwaveEpisode> first_of_season(const std::vector<HeatwaveEpisode>& episodes,
                                             const std::vector<Date>& days, const SeasonBounds& season) {
  std::map<std::pair<std::size_t, int>, HeatwaveEpisode> first;
  for (const auto& e : episodes) {
    if (e.start >= days.size()) throw Error(ErrorCode::InvalidArgument, "episode start outside panel");
    const Date d = days[e.start];
    if (!season.contains(d)) continue;
    const auto key = std::make_pair(e.unit, year_of(d));
    const auto it = first.find(key);
    if (it == first.end() || e.start < it->second.start) first[key] = e;
  }
  std::vector<HeatwaveEpisode> out;
  out.reserve(first.size());
  for (const auto& [key, e] : first) out.push_back(e);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.unit != b.unit ? a.unit < b.unit : a.start < b.start;
  });
  return out;
}

TreatmentMask mask_from_episodes(const std::vector<HeatwaveEpisode>& episodes, std::size_t n_units,
                                 std::size_t n_times) {
  TreatmentMask m = TreatmentMask::Zero(static_cast<Eigen::Index>(n_units), static_cast<Eigen::Index>(n_times));
  for (const auto& e : episodes) {
    if (e.unit >= n_units || e.start + e.length > n_times) throw Error(ErrorCode::InvalidArgument, "episode outside mask");
    m.row(static_cast<Eigen::Index>(e.unit))
        .segment(static_cast<Eigen::Index>(e.start), static_cast<Eigen::Index>(e.length))
        .setOnes();
  }
  return m;
}

std::string episodes_to_csv(const std::vector<HeatwaveEpisode>& episodes, const Panel& panel) {
  std::ostringstream os;
  os << "unit_id,start_date,length_days\n";
  for (const auto& e : episodes) {
    os << panel.units()[e.unit] << ',' << format_date(panel.days()[e.start]) << ',' << e.length << '\n';
  }
  return os.str();
}

std::vector<HeatwaveEpisode> read_episodes_csv(const std::filesystem::path& path, const Panel& panel) {
  const auto table = csv::read_file(path);
  const auto cu = table.require_column("unit_id");
  const auto cs = table.require_column("start_date");
  const auto cl = table.require_column("length_days");
  std::vector<HeatwaveEpisode> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto line = table.line_numbers[r];
    const auto unit = panel.find_unit(table.rows[r][cu]);
    if (!unit) throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": unknown unit");
    const auto len = csv::parse_int(table.rows[r][cl], line);
    if (len < 1) throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": length must be >= 1");
    out.push_back({*unit, panel.time_index(parse_date(table.rows[r][cs])), static_cast<std::size_t>(len)});
  }
  return out;
}

}  // namespace hwsc::exposure
