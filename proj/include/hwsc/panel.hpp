#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace hwsc {

using Date = std::chrono::sys_days;

Date make_date(int year, unsigned month, unsigned day);
/// Parses YYYY-MM-DD.
Date parse_date(const std::string& iso);
std::string format_date(Date d);
int year_of(Date d);

enum class Scale { raw_rate, log_rate, simulated_log_rate };

std::string to_string(Scale s);
Scale parse_scale(const std::string& s);

/// One (unit, day) observation as ingested.
struct Record {
  std::string unit;
  Date date;
  double outcome = 0.0;
  std::optional<double> heat;
  std::optional<double> population;

  bool operator==(const Record&) const = default;
};

/// Balanced unit x day panel. Rows are units, columns are consecutive days.
/// Immutable after construction.
class Panel {
 public:
  Panel(std::vector<std::string> units, std::vector<Date> days, Eigen::MatrixXd outcome,
        std::optional<Eigen::MatrixXd> heat = std::nullopt,
        std::optional<Eigen::MatrixXd> population = std::nullopt, Scale scale = Scale::raw_rate);

  std::size_t n_units() const { return units_.size(); }
  std::size_t n_times() const { return days_.size(); }

  const std::vector<std::string>& units() const { return units_; }
  const std::vector<Date>& days() const { return days_; }
  const Eigen::MatrixXd& outcome() const { return outcome_; }
  const std::optional<Eigen::MatrixXd>& heat() const { return heat_; }
  const std::optional<Eigen::MatrixXd>& population() const { return population_; }
  Scale scale() const { return scale_; }

  std::size_t unit_index(const std::string& id) const;
  std::optional<std::size_t> find_unit(const std::string& id) const;
  std::size_t time_index(Date d) const;

  Panel with_outcome(Eigen::MatrixXd outcome, Scale scale) const;

  /// Records in unit-major order.
  std::vector<Record> records() const;

 private:
  std::vector<std::string> units_;
  std::vector<Date> days_;
  Eigen::MatrixXd outcome_;
  std::optional<Eigen::MatrixXd> heat_;
  std::optional<Eigen::MatrixXd> population_;
  Scale scale_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Validates that the records form a complete unit x day grid over a
/// contiguous run of days. Units keep first-appearance order.
Panel build_panel(const std::vector<Record>& records, Scale scale = Scale::raw_rate);

Panel read_panel_csv(const std::filesystem::path& path, Scale scale = Scale::raw_rate);
std::string panel_to_csv(const Panel& panel);

/// Zero cells replaced by the centered rolling mean of width `window`
/// (truncated at the series ends). With `smooth_all` every cell is replaced.
Eigen::VectorXd impute_zero_rates(const Eigen::VectorXd& series, int window, bool smooth_all = false);

/// Rolling-mean imputation of zero rates followed by the natural log.
Panel log_transform_rates(const Panel& panel, int window, bool smooth_all = false);

/// Per-unit covariate profile X_i.
struct CovariateTable {
  std::vector<std::string> units;
  std::vector<std::string> names;
  Eigen::MatrixXd values;  // units x p

  void validate() const;
  /// Rows reordered to follow `order`; every id must be present.
  CovariateTable aligned_to(const std::vector<std::string>& order) const;
};

CovariateTable read_covariates_csv(const std::filesystem::path& path);

struct EpisodeWindow {
  std::size_t treated_unit = 0;
  std::size_t t0 = 0;  // first post (onset) day index
  std::size_t pre_len = 0;
  std::size_t post_len = 0;

  /// Throws WindowOutOfRange unless the window fits a panel of `n_times` days.
  void validate(std::size_t n_times) const;
  std::size_t begin() const { return t0 - pre_len; }
  std::size_t end() const { return t0 + post_len; }
};

struct WindowSlice {
  Eigen::VectorXd treated_pre;
  Eigen::VectorXd treated_post;
  Eigen::MatrixXd donors_pre;   // pre_len x J
  Eigen::MatrixXd donors_post;  // post_len x J
};

WindowSlice slice_window(const Panel& panel, const EpisodeWindow& window,
                         const std::vector<std::size_t>& donors);

}  // namespace hwsc
