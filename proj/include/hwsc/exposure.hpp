#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hwsc/panel.hpp"

namespace hwsc::exposure {

enum class Reference { per_year, whole_period, warm_season };

Reference parse_reference(const std::string& s);
std::string to_string(Reference r);

/// Calendar bounds of a warm season, inclusive, applied to every year.
struct SeasonBounds {
  unsigned start_month = 5;
  unsigned start_day = 1;
  unsigned end_month = 9;
  unsigned end_day = 30;

  bool contains(Date d) const;
};

struct HeatwaveDefinition {
  double percentile = 95.0;
  int min_duration = 2;
  Reference reference = Reference::per_year;
  SeasonBounds season{};

  void validate() const;
};

struct HeatwaveEpisode {
  std::size_t unit = 0;
  std::size_t start = 0;  // day index of onset
  std::size_t length = 0;

  bool operator==(const HeatwaveEpisode&) const = default;
};

/// Z_it: 1 on every day of every kept episode.
using TreatmentMask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

struct Detection {
  std::vector<HeatwaveEpisode> episodes;  // sorted by (unit, start)
  TreatmentMask mask;
};

/// Nearest-rank percentile: the ceil(r/100 * n)-th smallest value.
double percentile_threshold(std::span<const double> series, double r);

/// Per-day threshold q_i^r for one unit's heat series under `def.reference`.
Eigen::VectorXd unit_thresholds(const Eigen::VectorXd& heat, const std::vector<Date>& days,
                                const HeatwaveDefinition& def);

/// Maximal runs of days with heat >= threshold lasting at least min_duration.
std::vector<std::pair<std::size_t, std::size_t>> exceedance_runs(const Eigen::VectorXd& heat,
                                                                 const Eigen::VectorXd& thresholds,
                                                                 int min_duration);

Detection detect_heatwaves(const Panel& panel, const HeatwaveDefinition& def);

/// Keeps the earliest episode per unit and season. Episodes whose onset falls
/// outside every season are dropped.
std::vector<HeatwaveEpisode> first_of_season(const std::vector<HeatwaveEpisode>& episodes,
                                             const std::vector<Date>& days, const SeasonBounds& season);

TreatmentMask mask_from_episodes(const std::vector<HeatwaveEpisode>& episodes, std::size_t n_units,
                                 std::size_t n_times);

std::string episodes_to_csv(const std::vector<HeatwaveEpisode>& episodes, const Panel& panel);
std::vector<HeatwaveEpisode> read_episodes_csv(const std::filesystem::path& path, const Panel& panel);

}  // namespace hwsc::exposure
