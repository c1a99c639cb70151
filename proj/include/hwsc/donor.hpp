#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "hwsc/exposure.hpp"
#include "hwsc/geo.hpp"
#include "hwsc/panel.hpp"

namespace hwsc::donor {

enum class PoolKind { standard, spatial_buffered };

/// Exclude donors within s0 contiguity steps of any treated unit.
struct SeparationBuffer {
  int s0 = 1;
};
/// Exclude donors whose centroid lies within `km` of any treated unit.
struct DistanceBuffer {
  double km = 20.0;
};
using Buffer = std::variant<std::monostate, SeparationBuffer, DistanceBuffer>;

struct DonorPool {
  std::size_t treated_unit = 0;
  EpisodeWindow window{};
  PoolKind kind = PoolKind::standard;
  Buffer buffer{};
  std::vector<std::size_t> donors;
  /// Separation (steps) or distance (km) from each donor to the nearest
  /// treated unit; empty for standard pools.
  std::vector<double> proximity;
  std::vector<std::size_t> treated_in_window;
  bool screen_truncated = false;
};

/// Units with at least one treated day inside [window.begin(), window.end()),
/// always including the focal treated unit.
std::vector<std::size_t> treated_in_window(const exposure::TreatmentMask& mask, const EpisodeWindow& window);

/// Units untreated on every day of the window.
DonorPool standard_pool(const exposure::TreatmentMask& mask, const EpisodeWindow& window);

/// Standard pool minus units with min separation <= s0 to the treated set,
/// ordered by separation (s0+1 first), then unit order.
DonorPool spatial_pool(const exposure::TreatmentMask& mask, const EpisodeWindow& window,
                       const geo::SeparationMatrix& sep, int s0);

/// Standard pool minus units within `km` of any treated unit, ordered by
/// distance to the nearest treated unit.
DonorPool spatial_pool(const exposure::TreatmentMask& mask, const EpisodeWindow& window,
                       const Eigen::MatrixXd& distance_km, double km);

/// Dispatches on the buffer alternative. Throws EmptyPool when nothing is
/// eligible.
DonorPool eligible_donors(const exposure::TreatmentMask& mask, const EpisodeWindow& window, const Buffer& buffer,
                          const geo::SeparationMatrix* sep, const Eigen::MatrixXd* distance_km);

/// Squared Mahalanobis distances of each donor's covariates to the treated
/// unit's, using the donors' sample covariance (ridge-regularised if needed).
Eigen::VectorXd mahalanobis_distances(const DonorPool& pool, const Eigen::MatrixXd& covariates);

/// Keeps the K donors closest in Mahalanobis distance; ties broken by unit id.
/// A pool smaller than K is returned whole with `screen_truncated` set.
DonorPool mahalanobis_screen(const DonorPool& pool, const Eigen::MatrixXd& covariates,
                             const std::vector<std::string>& unit_ids, int K);

/// Per-unit covariate profiles as means of `series` over the pre window.
Eigen::MatrixXd pre_window_means(const std::vector<Eigen::MatrixXd>& series, const EpisodeWindow& window);

}  // namespace hwsc::donor
