#include "hwsc/panel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "hwsc/csv.hpp"
#include "hwsc/error.hpp"

namespace hwsc {

Date make_date(int year, unsigned month, unsigned day) {
  const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                        std::chrono::day{day}};
  if (!ymd.ok()) throw Error(ErrorCode::InvalidArgument, "invalid calendar date");
  return Date{ymd};
}

Date parse_date(const std::string& iso) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (iso.size() != 10 || std::sscanf(iso.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
    throw Error(ErrorCode::ParseError, "bad ISO-8601 date '" + iso + "'");
  }
  try {
    return make_date(y, m, d);
  } catch (const Error&) {
    throw Error(ErrorCode::ParseError, "bad ISO-8601 date '" + iso + "'");
  }
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

int year_of(Date d) { return static_cast<int>(std::chrono::year_month_day{d}.year()); }

std::string to_string(Scale s) {
  switch (s) {
    case Scale::raw_rate: return "raw_rate";
    case Scale::log_rate: return "log_rate";
    case Scale::simulated_log_rate: return "simulated_log_rate";
  }
  return "raw_rate";
}

Scale parse_scale(const std::string& s) {
  if (s == "raw_rate" || s == "raw") return Scale::raw_rate;
  if (s == "log_rate" || s == "log") return Scale::log_rate;
  if (s == "simulated_log_rate") return Scale::simulated_log_rate;
  throw Error(ErrorCode::InvalidArgument, "unknown scale '" + s + "'");
}

Panel::Panel(std::vector<std::string> units, std::vector<Date> days, Eigen::MatrixXd outcome,
             std::optional<Eigen::MatrixXd> heat, std::optional<Eigen::MatrixXd> population,
             Scale scale)
    : units_(std::move(units)),
      days_(std::move(days)),
      outcome_(std::move(outcome)),
      heat_(std::move(heat)),
      population_(std::move(population)),
      scale_(scale) {
  const auto n = static_cast<Eigen::Index>(units_.size());
  const auto t = static_cast<Eigen::Index>(days_.size());
  if (n == 0 || t == 0) throw Error(ErrorCode::InvalidArgument, "panel needs at least one unit and one day");
  auto check_shape = [&](const Eigen::MatrixXd& m, const char* what) {
    if (m.rows() != n || m.cols() != t) {
      throw Error(ErrorCode::DimensionMismatch, std::string(what) + " matrix is not N x T");
    }
    if (!m.allFinite()) throw Error(ErrorCode::NonFiniteValue, std::string(what) + " has non-finite cells");
  };
  check_shape(outcome_, "outcome");
  if (heat_) check_shape(*heat_, "heat");
  if (population_) {
    check_shape(*population_, "population");
    if ((population_->array() <= 0.0).any()) {
      throw Error(ErrorCode::InvalidArgument, "population must be strictly positive");
    }
  }
  for (std::size_t i = 0; i < units_.size(); ++i) {
    if (units_[i].empty()) throw Error(ErrorCode::InvalidArgument, "empty unit id");
    if (!index_.emplace(units_[i], i).second) {
      throw Error(ErrorCode::DuplicateCell, "unit '" + units_[i] + "' appears twice");
    }
  }
  for (std::size_t k = 1; k < days_.size(); ++k) {
    if (days_[k] - days_[k - 1] != std::chrono::days{1}) {
      throw Error(ErrorCode::MissingCell, "days are not contiguous at " + format_date(days_[k]));
    }
  }
}

std::size_t Panel::unit_index(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::InvalidArgument, "unknown unit '" + id + "'");
  return it->second;
}

std::optional<std::size_t> Panel::find_unit(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Panel::time_index(Date d) const {
  if (d < days_.front() || d > days_.back()) {
    throw Error(ErrorCode::WindowOutOfRange, "date " + format_date(d) + " outside panel");
  }
  return static_cast<std::size_t>((d - days_.front()).count());
}

Panel Panel::with_outcome(Eigen::MatrixXd outcome, Scale scale) const {
  return Panel(units_, days_, std::move(outcome), heat_, population_, scale);
}

std::vector<Record> Panel::records() const {
  std::vector<Record> out;
  out.reserve(n_units() * n_times());
  for (std::size_t i = 0; i < n_units(); ++i) {
    for (std::size_t t = 0; t < n_times(); ++t) {
      const auto r = static_cast<Eigen::Index>(i);
      const auto c = static_cast<Eigen::Index>(t);
      Record rec{units_[i], days_[t], outcome_(r, c), std::nullopt, std::nullopt};
      if (heat_) rec.heat = (*heat_)(r, c);
      if (population_) rec.population = (*population_)(r, c);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

Panel build_panel(const std::vector<Record>& records, Scale scale) {
  if (records.empty()) throw Error(ErrorCode::MissingCell, "no records");
  std::vector<std::string> units;
  std::unordered_map<std::string, std::size_t> unit_pos;
  Date first = records.front().date;
  Date last = records.front().date;
  for (const auto& r : records) {
    if (unit_pos.emplace(r.unit, units.size()).second) units.push_back(r.unit);
    first = std::min(first, r.date);
    last = std::max(last, r.date);
  }
  const auto n = units.size();
  const auto t = static_cast<std::size_t>((last - first).count()) + 1;
  std::vector<Date> days(t);
  for (std::size_t k = 0; k < t; ++k) days[k] = first + std::chrono::days{static_cast<int>(k)};

  const bool has_heat = records.front().heat.has_value();
  const bool has_pop = records.front().population.has_value();
  Eigen::MatrixXd outcome(n, t), heat, pop;
  if (has_heat) heat.resize(n, t);
  if (has_pop) pop.resize(n, t);
  std::vector<char> seen(n * t, 0);

  for (const auto& r : records) {
    const auto i = unit_pos.at(r.unit);
    const auto k = static_cast<std::size_t>((r.date - first).count());
    if (seen[i * t + k]) {
      throw Error(ErrorCode::DuplicateCell, "duplicate record for " + r.unit + " on " + format_date(r.date));
    }
    seen[i * t + k] = 1;
    if (!std::isfinite(r.outcome)) {
      throw Error(ErrorCode::NonFiniteValue, "outcome for " + r.unit + " on " + format_date(r.date));
    }
    if (r.heat.has_value() != has_heat || r.population.has_value() != has_pop) {
      throw Error(ErrorCode::MissingCell, "optional columns present on some records only");
    }
    const auto ri = static_cast<Eigen::Index>(i);
    const auto ci = static_cast<Eigen::Index>(k);
    outcome(ri, ci) = r.outcome;
    if (has_heat) {
      if (!std::isfinite(*r.heat)) throw Error(ErrorCode::NonFiniteValue, "heat for " + r.unit);
      heat(ri, ci) = *r.heat;
    }
    if (has_pop) {
      if (!std::isfinite(*r.population)) throw Error(ErrorCode::NonFiniteValue, "population for " + r.unit);
      pop(ri, ci) = *r.population;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < t; ++k) {
      if (!seen[i * t + k]) {
        throw Error(ErrorCode::MissingCell, "no record for " + units[i] + " on " + format_date(days[k]));
      }
    }
  }
  std::optional<Eigen::MatrixXd> heat_opt, pop_opt;
  if (has_heat) heat_opt = std::move(heat);
  if (has_pop) pop_opt = std::move(pop);
  return Panel(std::move(units), std::move(days), std::move(outcome), std::move(heat_opt),
               std::move(pop_opt), scale);
}

Panel read_panel_csv(const std::filesystem::path& path, Scale scale) {
  const auto table = csv::read_file(path);
  const auto c_unit = table.require_column("unit_id");
  const auto c_date = table.require_column("date");
  const auto c_out = table.require_column("outcome");
  const int c_heat = table.column("heat");
  const int c_pop = table.column("population");
  std::vector<Record> records;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    Record rec;
    rec.unit = row[c_unit];
    if (rec.unit.empty()) throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": empty unit_id");
    try {
      rec.date = parse_date(row[c_date]);
    } catch (const Error&) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": bad date '" + row[c_date] + "'");
    }
    rec.outcome = csv::parse_double(row[c_out], line);
    if (c_heat >= 0) rec.heat = csv::parse_double(row[static_cast<std::size_t>(c_heat)], line);
    if (c_pop >= 0) rec.population = csv::parse_double(row[static_cast<std::size_t>(c_pop)], line);
    records.push_back(std::move(rec));
  }
  return build_panel(records, scale);
}

std::string panel_to_csv(const Panel& panel) {
  std::ostringstream os;
  os << "unit_id,date,outcome";
  if (panel.heat()) os << ",heat";
  if (panel.population()) os << ",population";
  os << '\n';
  for (const auto& r : panel.records()) {
    os << r.unit << ',' << format_date(r.date) << ',' << csv::format_double(r.outcome);
    if (r.heat) os << ',' << csv::format_double(*r.heat);
    if (r.population) os << ',' << csv::format_double(*r.population);
    os << '\n';
  }
  return os.str();
}

Eigen::VectorXd impute_zero_rates(const Eigen::VectorXd& series, int window, bool smooth_all) {
  if (window < 1 || window % 2 == 0) {
    throw Error(ErrorCode::InvalidArgument, "rolling window must be odd and >= 1");
  }
  const auto n = series.size();
  if ((series.array() < 0.0).any()) throw Error(ErrorCode::InvalidArgument, "rates must be nonnegative");
  const Eigen::Index half = window / 2;
  Eigen::VectorXd out = series;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (!smooth_all && series[t] != 0.0) continue;
    const auto lo = std::max<Eigen::Index>(0, t - half);
    const auto hi = std::min<Eigen::Index>(n - 1, t + half);
    out[t] = series.segment(lo, hi - lo + 1).mean();
  }
  return out;
}

Panel log_transform_rates(const Panel& panel, int window, bool smooth_all) {
  if (panel.scale() != Scale::raw_rate) {
    throw Error(ErrorCode::InvalidArgument, "log_transform_rates expects a raw_rate panel");
  }
  Eigen::MatrixXd out(panel.n_units(), panel.n_times());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Eigen::VectorXd row = panel.outcome().row(i).transpose();
    const Eigen::VectorXd imputed = impute_zero_rates(row, window, smooth_all);
    for (Eigen::Index t = 0; t < out.cols(); ++t) {
      if (imputed[t] <= 0.0) {
        throw Error(ErrorCode::AllZeroWindow, "unit " + panel.units()[static_cast<std::size_t>(i)] + " day " +
                                                  format_date(panel.days()[static_cast<std::size_t>(t)]));
      }
      out(i, t) = std::log(imputed[t]);
    }
  }
  return panel.with_outcome(std::move(out), Scale::log_rate);
}

void CovariateTable::validate() const {
  if (names.empty()) throw Error(ErrorCode::InvalidArgument, "covariate table needs p >= 1");
  if (values.rows() != static_cast<Eigen::Index>(units.size()) ||
      values.cols() != static_cast<Eigen::Index>(names.size())) {
    throw Error(ErrorCode::DimensionMismatch, "covariate matrix shape");
  }
  if (!values.allFinite()) throw Error(ErrorCode::NonFiniteValue, "covariates");
}

CovariateTable CovariateTable::aligned_to(const std::vector<std::string>& order) const {
  std::unordered_map<std::string, Eigen::Index> pos;
  for (std::size_t i = 0; i < units.size(); ++i) pos.emplace(units[i], static_cast<Eigen::Index>(i));
  CovariateTable out{order, names, Eigen::MatrixXd(static_cast<Eigen::Index>(order.size()), values.cols())};
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto it = pos.find(order[i]);
    if (it == pos.end()) throw Error(ErrorCode::MissingCell, "no covariates for unit '" + order[i] + "'");
    out.values.row(static_cast<Eigen::Index>(i)) = values.row(it->second);
  }
  return out;
}

CovariateTable read_covariates_csv(const std::filesystem::path& path) {
  const auto table = csv::read_file(path);
  const auto c_unit = table.require_column("unit_id");
  CovariateTable out;
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == c_unit) continue;
    out.names.push_back(table.header[c]);
    cols.push_back(c);
  }
  out.values.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    out.units.push_back(table.rows[r][c_unit]);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
          csv::parse_double(table.rows[r][cols[k]], table.line_numbers[r]);
    }
  }
  out.validate();
  return out;
}

void EpisodeWindow::validate(std::size_t n_times) const {
  if (pre_len < 1 || post_len < 1) throw Error(ErrorCode::WindowOutOfRange, "pre_len and post_len must be >= 1");
  if (t0 < pre_len || t0 + post_len > n_times) {
    throw Error(ErrorCode::WindowOutOfRange, "window [t0-" + std::to_string(pre_len) + ", t0+" +
                                                 std::to_string(post_len) + ") with t0=" + std::to_string(t0) +
                                                 " does not fit " + std::to_string(n_times) + " days");
  }
}

WindowSlice slice_window(const Panel& panel, const EpisodeWindow& window,
                         const std::vector<std::size_t>& donors) {
  window.validate(panel.n_times());
  if (window.treated_unit >= panel.n_units()) throw Error(ErrorCode::InvalidArgument, "treated unit index");
  if (donors.empty()) throw Error(ErrorCode::EmptyPool, "donor list is empty");
  const auto& y = panel.outcome();
  const auto pre_begin = static_cast<Eigen::Index>(window.begin());
  const auto t0 = static_cast<Eigen::Index>(window.t0);
  const auto pre = static_cast<Eigen::Index>(window.pre_len);
  const auto post = static_cast<Eigen::Index>(window.post_len);
  const auto treated = static_cast<Eigen::Index>(window.treated_unit);

  WindowSlice s;
  s.treated_pre = y.row(treated).segment(pre_begin, pre).transpose();
  s.treated_post = y.row(treated).segment(t0, post).transpose();
  s.donors_pre.resize(pre, static_cast<Eigen::Index>(donors.size()));
  s.donors_post.resize(post, static_cast<Eigen::Index>(donors.size()));
  for (std::size_t j = 0; j < donors.size(); ++j) {
    if (donors[j] >= panel.n_units()) throw Error(ErrorCode::InvalidArgument, "donor index");
    const auto d = static_cast<Eigen::Index>(donors[j]);
    s.donors_pre.col(static_cast<Eigen::Index>(j)) = y.row(d).segment(pre_begin, pre).transpose();
    s.donors_post.col(static_cast<Eigen::Index>(j)) = y.row(d).segment(t0, post).transpose();
  }
  return s;
}

}  // namespace hwsc
